"""Jacobi elliptic functions sn, cn, dn via the arithmetic-geometric mean."""
import math


class EllipticDomainError(ValueError):
    pass


_MAX_ITER = 16


def _agm_sn_cn_dn(u, m):
    # descending Landen transformation, 0 < m < 1
    a = [1.0]
    c = [math.sqrt(m)]
    b = math.sqrt(1.0 - m)
    while abs(c[-1]) > 1e-16 and len(a) <= _MAX_ITER:
        an, bn = a[-1], b
        a.append(0.5 * (an + bn))
        c.append(0.5 * (an - bn))
        b = math.sqrt(an * bn)

    n = len(a) - 1
    phi = (2.0**n) * a[n] * u
    for k in range(n, 0, -1):
        phi = 0.5 * (phi + math.asin(c[k] / a[k] * math.sin(phi)))
    sn = math.sin(phi)
    cn = math.cos(phi)
    # cn/cos(phi1 - phi0) loses digits near cn = 0; 1 - m sn^2 >= 1 - m > 0
    dn = math.sqrt(1.0 - m * sn * sn)
    return sn, cn, dn


def jacobi_sn_cn_dn(u, m):
    """Return ``(sn, cn, dn)`` of argument ``u`` and parameter ``m = k**2``.

    ``0 <= m < 1`` is evaluated with the AGM; ``m > 1`` is reduced to
    parameter ``1/m`` by the reciprocal-modulus transformation and ``m = 1``
    uses the hyperbolic limit.
    """
    if not (m >= 0.0) or not math.isfinite(m):
        raise EllipticDomainError(f"parameter m={m!r} must be finite and >= 0")
    if not math.isfinite(u):
        raise EllipticDomainError(f"argument u={u!r} is not finite")
    if m == 0.0:
        return math.sin(u), math.cos(u), 1.0
    if m == 1.0:
        sech = 1.0 / math.cosh(u)
        return math.tanh(u), sech, sech
    if m > 1.0:
        k = math.sqrt(m)
        sn, cn, dn = _agm_sn_cn_dn(k * u, 1.0 / m)
        return sn / k, dn, cn
    return _agm_sn_cn_dn(u, m)
