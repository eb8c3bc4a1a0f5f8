import math

INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI2 = (3 - math.sqrt(5)) / 2


def golden_section_max(f, a, b, tol=1e-10, max_iter=500):
    """Maximize a unimodal f on [a, b]; returns (x, f(x)).

    The interval is shrunk until its width is below ``tol``; the end points
    are compared at the end so boundary maxima are returned exactly.
    """
    a, b = min(a, b), max(a, b)
    a0, b0 = a, b
    h = b - a
    c = a + INV_PHI2 * h
    d = a + INV_PHI * h
    fc, fd = f(c), f(d)
    it = 0
    while h > tol and it < max_iter:
        if fc >= fd:
            b, d, fd = d, c, fc
            h = b - a
            c = a + INV_PHI2 * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            h = b - a
            d = a + INV_PHI * h
            fd = f(d)
        it += 1
    x, fx = (c, fc) if fc >= fd else (d, fd)
    # scan candidates in ascending x so ties resolve to the smallest argument
    best = None
    for xc, fxc in sorted([(a0, f(a0)), (x, fx), (b0, f(b0))]):
        if best is None or fxc > best[1]:
            best = (xc, fxc)
    return best
