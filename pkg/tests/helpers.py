import numpy as np

from covshift.geom import PointPattern


def csr(window, n, gen):
    """``n`` uniform points in a rectangular window."""
    x0, y0, x1, y1 = window.bounds
    xy = np.column_stack([gen.uniform(x0, x1, n), gen.uniform(y0, y1, n)])
    return PointPattern(xy, window)
