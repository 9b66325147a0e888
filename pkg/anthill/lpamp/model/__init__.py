"""

    Models for lp approximate message passing

    'prox' - proximal map of lambda*|x|^p, its threshold, jump and derivatives
    'smooth' - Gaussian-mollified proximal map used by the iteration
    'quadrature' - standard normal expectations of piecewise smooth integrands
    'prior' - sparse signal priors
    'se' - state evolution, oracle policies, fixed point analysis
    'minimax' - minimax risks, phase transitions, noise sensitivity constants
    'cache' - on-disk memo of minimax curve points
    'instance' - compressed sensing instances, generated or loaded
    'amp' - the iteration itself, SURE estimates and tuning

"""
