import numpy as np


class ConstNormal:
    """Generator stand-in whose standard normals are a fixed constant.

    With 0 a Gaussian sampler returns its conditional mean; with 1 it returns
    mean plus the Cholesky column sum, which exposes the standard deviation in
    one dimension.
    """

    def __init__(self, value=0.0):
        self.value = value

    def standard_normal(self, size=None):
        if size is None:
            return float(self.value)
        return np.full(size, self.value, dtype=float)
