"""Finite operator learning on structured quad meshes.

Thin layer over the compiled extension; see README for the workflow.
"""

from ._folpy import *  # noqa: F401,F403
from ._folpy import __doc__  # noqa: F401

import numpy as np


def uniform_design(n_coefficients, value=0.5, **kw):
    """Design whose raw field is the constant `value`."""
    c = np.zeros(n_coefficients)
    c[0] = value
    return FourierDesign(c, **kw)  # noqa: F405
