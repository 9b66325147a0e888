
from setuptools import setup, find_namespace_packages

DEPENDENCIES = [
    "tornado>=5.1",
    "ujson>=2.0",
    "numpy>=1.17",
    "scipy>=1.4"
]

setup(
    name='anthill-lpamp',
    version='0.1',
    description='Lp-regularized approximate message passing and its state evolution',
    author='desertkun',
    license='MIT',
    author_email='desertkun@gmail.com',
    url='https://github.com/anthill-platform/anthill-lpamp',
    include_package_data=True,
    packages=find_namespace_packages(include=["anthill.*"]),
    zip_safe=False,
    install_requires=DEPENDENCIES,
    entry_points={
        "console_scripts": [
            "lpamp = anthill.lpamp.server:main"
        ]
    }
)
