"""Exponent windows under which the estimates and existence results hold.

Each check raises :class:`ExponentWindowError` naming the first violated
inequality, so experiments can refuse out-of-window exponents before doing
any work.
"""

from .errors import ExponentWindowError

# slack for the non-strict inequalities; critical indexes like s = d/q - 1
# land on the boundary only up to rounding
_EPS = 1e-12


def _require(condition: bool, inequality: str, **values) -> None:
    if not condition:
        detail = ", ".join(f"{k}={v:g}" for k, v in values.items())
        raise ExponentWindowError(f"violated: {inequality} ({detail})")


def check_norm_index(q: float, r: float, s: float, dim: int = None) -> None:
    """Standing assumptions of a Sobolev-Lorentz index (q, r, s)."""
    _require(q > 1, "q > 1", q=q)
    _require(r >= 1, "r >= 1", r=r)
    _require(s >= 0, "s >= 0", s=s)
    if dim is not None:
        _require(s < dim / q, "s < d/q", s=s, d=dim, q=q)


def check_kato_index(s: float, q: float, q_tilde: float, dim: int) -> None:
    """s/d < 1/q~ <= 1/q <= (s+1)/d with q, q~ > 1."""
    _require(q > 1, "q > 1", q=q)
    _require(q_tilde > 1, "q~ > 1", q_tilde=q_tilde)
    _require(s >= 0, "s >= 0", s=s)
    _require(s / dim < 1 / q_tilde, "s/d < 1/q~", s=s, d=dim, q_tilde=q_tilde)
    _require(1 / q_tilde <= 1 / q + _EPS, "1/q~ <= 1/q", q=q, q_tilde=q_tilde)
    _require(1 / q <= (s + 1) / dim + _EPS, "1/q <= (s+1)/d", s=s, d=dim, q=q)


def check_base_window(s: float, q: float, dim: int) -> None:
    """s >= 0, q > 1 and s/d < 1/q <= (s+1)/d."""
    _require(s >= 0, "s >= 0", s=s)
    _require(q > 1, "q > 1", q=q)
    _require(s / dim < 1 / q, "s/d < 1/q", s=s, d=dim, q=q)
    _require(1 / q <= (s + 1) / dim + _EPS, "1/q <= (s+1)/d", s=s, d=dim, q=q)


def check_bilinear_window(s: float, q: float, q_tilde: float, dim: int,
                          target: bool = False) -> None:
    """Window of the bilinear estimates.

    ``target=False`` is the Kato-space estimate (s/d < 1/q~), ``target=True``
    the estimate into the q~ = q space, which needs the stronger lower bound
    (1/q + s/d)/2 < 1/q~.
    """
    check_base_window(s, q, dim)
    upper = min(0.5 + s / (2 * dim), 1 / q)
    if target:
        lower = 0.5 * (1 / q + s / dim)
        _require(lower < 1 / q_tilde, "(1/q + s/d)/2 < 1/q~", s=s, q=q, q_tilde=q_tilde, d=dim)
    else:
        _require(s / dim < 1 / q_tilde, "s/d < 1/q~", s=s, d=dim, q_tilde=q_tilde)
    _require(1 / q_tilde < upper, "1/q~ < min{1/2 + s/(2d), 1/q}",
             s=s, q=q, q_tilde=q_tilde, d=dim)


def check_existence_window(s: float, q: float, q_tilde: float, r: float, dim: int) -> None:
    """Hypotheses of the local existence theorem (and its Besov variant)."""
    _require(r >= 1, "r >= 1", r=r)
    check_bilinear_window(s, q, q_tilde, dim, target=True)


def check_embedding_window(s: float, q: float, q_tilde: float, dim: int) -> None:
    """Window of the heat-flow embedding: s/d < 1/q~ < 1/q."""
    check_base_window(s, q, dim)
    _require(s / dim < 1 / q_tilde, "s/d < 1/q~", s=s, d=dim, q_tilde=q_tilde)
    _require(1 / q_tilde < 1 / q, "1/q~ < 1/q", q=q, q_tilde=q_tilde)


def check_product_window(p: float, q: float, s: float, dim: int) -> None:
    """p, q > 1, 0 <= s/d < min{1/p, 1/q} and 1/p + 1/q < 1 + s/d."""
    _require(p > 1, "p > 1", p=p)
    _require(q > 1, "q > 1", q=q)
    _require(s >= 0, "0 <= s/d", s=s)
    _require(s / dim < min(1 / p, 1 / q), "s/d < min{1/p, 1/q}", s=s, d=dim, p=p, q=q)
    _require(1 / p + 1 / q < 1 + s / dim, "1/p + 1/q < 1 + s/d", p=p, q=q, s=s, d=dim)


def product_exponent(p: float, q: float, s: float, dim: int) -> float:
    """The r with 1/r = 1/p + 1/q - s/d."""
    return 1.0 / (1 / p + 1 / q - s / dim)


def check_critical_window(q: float, q_tilde: float, dim: int) -> None:
    """Global small-data window at the critical index s = d/q - 1."""
    _require(1 < q <= dim, "1 < q <= d", q=q, d=dim)
    lower = 1 / q - 1 / (2 * dim)
    upper = min(0.5 + 1 / (2 * q) - 1 / (2 * dim), 1 / q)
    _require(lower < 1 / q_tilde, "1/q - 1/(2d) < 1/q~", q=q, q_tilde=q_tilde, d=dim)
    _require(1 / q_tilde < upper, "1/q~ < min{1/2 + 1/(2q) - 1/(2d), 1/q}",
             q=q, q_tilde=q_tilde, d=dim)


def is_critical(s: float, q: float, dim: int) -> bool:
    return abs(s - (dim / q - 1)) <= _EPS


def time_power(s: float, q: float, dim: int) -> float:
    """Exponent (1 + s - d/q)/2 of the horizon in the smallness conditions."""
    power = 0.5 * (1 + s - dim / q)
    return 0.0 if abs(power) <= _EPS else power


def proposition_window(kind: str, dim: int, q: float, q_tilde: float, s: float = 0.0) -> None:
    """Special cases of the super-critical theorem.

    ``kind="lebesgue"``: q > d, s = 0 and q < q~ < 2q.
    ``kind="sobolev"``: q = 2, d/2 - 1 < s < d/2 and (1/2 + s/d)/2 < 1/q~ < 1/2.
    """
    if kind == "lebesgue":
        _require(q > dim, "q > d", q=q, d=dim)
        _require(s == 0, "s = 0", s=s)
        _require(q < q_tilde < 2 * q, "q < q~ < 2q", q=q, q_tilde=q_tilde)
    elif kind == "sobolev":
        _require(q == 2, "q = 2", q=q)
        _require(dim / 2 - 1 < s < dim / 2, "d/2 - 1 < s < d/2", s=s, d=dim)
        _require(0.5 * (0.5 + s / dim) < 1 / q_tilde < 0.5,
                 "(1/2 + s/d)/2 < 1/q~ < 1/2", s=s, d=dim, q_tilde=q_tilde)
    else:
        raise ValueError(f"Unknown proposition kind: {kind}")
