
import os
import logging
import tempfile
import threading
import ujson


class CurveCache(object):
    """
    On-disk memo of expensive curve points, one JSON document per curve kind and quadrature
    order. Writes go through a temporary file and a rename, so readers never see a partial file.
    """

    def __init__(self, directory, quad_order):
        self.directory = directory
        self.quad_order = quad_order
        self.loaded = {}
        self.lock = threading.Lock()

    @staticmethod
    def key(**params):
        return ",".join("{0}={1!r}".format(name, float(params[name])) for name in sorted(params))

    def __path__(self, kind):
        return os.path.join(self.directory, "{0}-q{1}.json".format(kind, self.quad_order))

    def __load__(self, kind):
        try:
            return self.loaded[kind]
        except KeyError:
            pass

        entries = {}
        path = self.__path__(kind)

        if os.path.isfile(path):
            try:
                with open(path, "r") as f:
                    entries = ujson.load(f)
            except (ValueError, OSError) as e:
                logging.warning("Ignoring unreadable cache file {0}: {1}".format(path, e))
                entries = {}

            if not isinstance(entries, dict):
                logging.warning("Ignoring malformed cache file {0}".format(path))
                entries = {}

        self.loaded[kind] = entries
        return entries

    def get(self, kind, **params):
        with self.lock:
            return self.__load__(kind).get(CurveCache.key(**params))

    def put(self, kind, value, **params):
        """
        :raises CacheError if the cache file cannot be written
        """
        with self.lock:
            entries = self.__load__(kind)
            entries[CurveCache.key(**params)] = value
            self.__write__(kind, entries)

    def __write__(self, kind, entries):
        try:
            os.makedirs(self.directory, exist_ok=True)
            fd, temp = tempfile.mkstemp(prefix=".{0}-".format(kind), suffix=".tmp", dir=self.directory)
            try:
                with os.fdopen(fd, "w") as f:
                    ujson.dump(entries, f)
                os.replace(temp, self.__path__(kind))
            except BaseException:
                if os.path.exists(temp):
                    os.unlink(temp)
                raise
        except OSError as e:
            raise CacheError("Failed to write cache {0}: {1}".format(self.__path__(kind), e))


class CacheError(Exception):
    def __init__(self, message):
        self.message = message

    def __str__(self):
        return self.message
