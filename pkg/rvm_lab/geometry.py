"""Scalar geometry of the relativistic transport: cutoffs, unit vectors,
modulations, the good unknown and the energy weights.

All functions are vectorised: positions and momenta are arrays of shape
(..., 3), times are scalars or arrays of shape (...).

Authors: rvm_lab team
"""
import numpy as np

# Desk-scale replacement of the derivative hierarchy: weights are only
# defined for |alpha| + |beta| <= WEIGHT_TRUNCATION.
DESK_N = 3
WEIGHT_TRUNCATION = 2

_EYE = np.eye(3)


class DegenerateDirectionError(ValueError):
    """Raised when a direction is requested for a zero vector."""


class WeightOrderError(ValueError):
    """Raised when a weight is requested outside the desk-scale hierarchy."""


def _as_vectors(a):
    """Cast to a float array with a trailing axis of length 3."""
    a = np.asarray(a, dtype=float)
    if a.shape[-1:] != (3,):
        raise ValueError(f"expected arrays of 3-vectors, got shape {a.shape}")
    return a


def _norm(a):
    return np.sqrt(np.sum(a * a, axis=-1))


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def smooth_step(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    left = _flat_exp(u)
    right = _flat_exp(1.0 - u)
    return left / (left + right)


def smooth_step_derivative(u):
    """Derivative of `smooth_step`."""
    u = np.asarray(u, dtype=float)
    left, dleft = _flat_exp(u), _flat_exp_derivative(u)
    right, dright = _flat_exp(1.0 - u), _flat_exp_derivative(1.0 - u)
    return (dleft * right + left * dright) / (left + right) ** 2


def _flat_exp(u):
    """exp(-1/u) for u > 0, 0 otherwise."""
    positive = u > 0
    safe = np.where(positive, u, 1.0)
    return np.where(positive, np.exp(-1.0 / safe), 0.0)


def _flat_exp_derivative(u):
    positive = u > 0
    safe = np.where(positive, u, 1.0)
    return np.where(positive, np.exp(-1.0 / safe) / safe**2, 0.0)


class SmoothCutoff:
    """
    Even plateau function and its dyadic pieces.

    The profile equals 1 on [-transition_lo, transition_lo], vanishes
    outside [-transition_hi, transition_hi] and is monotone in between.

    Parameters
    ----------
    transition_lo : float, optional
        End of the plateau (default 5/4).

    transition_hi : float, optional
        Edge of the support (default 3/2).

    Notes
    -----
    The dyadic pieces are psi_k(x) = profile(x / 2^k) - profile(x / 2^(k-1)).
    They telescope, so a finite sum over k reproduces 1 up to roundoff on the
    range where the outermost terms saturate.
    """

    def __init__(self, transition_lo=1.25, transition_hi=1.5):
        """Default parameters."""
        if not 0 < transition_lo < transition_hi:
            raise ValueError(
                "transition_lo and transition_hi need 0 < lo < hi, "
                f"got {transition_lo} and {transition_hi}"
            )
        self.transition_lo = transition_lo
        self.transition_hi = transition_hi

    def _width(self):
        return self.transition_hi - self.transition_lo

    def profile(self, x):
        """Plateau function evaluated at x."""
        u = (np.abs(np.asarray(x, dtype=float)) - self.transition_lo) / self._width()
        return 1.0 - smooth_step(u)

    def profile_derivative(self, x):
        """Derivative of the plateau function."""
        x = np.asarray(x, dtype=float)
        u = (np.abs(x) - self.transition_lo) / self._width()
        return -smooth_step_derivative(u) * np.sign(x) / self._width()

    def psi(self, x, k):
        """Dyadic piece psi_k."""
        return self.profile(np.asarray(x) / 2.0**k) - self.profile(
            np.asarray(x) / 2.0 ** (k - 1)
        )

    def psi_le(self, x, k):
        """psi_{<=k}: the plateau rescaled to 2^k."""
        return self.profile(np.asarray(x) / 2.0**k)

    def psi_ge(self, x, k):
        """psi_{>=k} = 1 - psi_{<=k-1}."""
        return 1.0 - self.profile(np.asarray(x) / 2.0 ** (k - 1))

    def psi_ge_derivative(self, x, k):
        """Derivative of psi_{>=k} in x."""
        scale = 2.0 ** (k - 1)
        return -self.profile_derivative(np.asarray(x) / scale) / scale


CUTOFF = SmoothCutoff()


def psi_k(x, k):
    return CUTOFF.psi(x, k)


def psi_le(x, k):
    return CUTOFF.psi_le(x, k)


def psi_ge(x, k):
    return CUTOFF.psi_ge(x, k)


def lorentz_factor(v):
    """sqrt(1 + |v|^2)."""
    v = _as_vectors(v)
    return np.sqrt(1.0 + np.sum(v * v, axis=-1))


def hat_v(v):
    """Relativistic velocity v / sqrt(1 + |v|^2) of a momentum v."""
    v = _as_vectors(v)
    return v / lorentz_factor(v)[..., None]


def grad_hat_v(v):
    """Symmetric Jacobian of hat_v: delta_jk / gamma - v_j v_k / gamma^3."""
    v = _as_vectors(v)
    gamma = lorentz_factor(v)[..., None, None]
    outer = v[..., :, None] * v[..., None, :]
    return _EYE / gamma - outer / gamma**3


def _safe_unit(v):
    """v / |v|, with the zero vector returned where v = 0."""
    norm = _norm(v)
    safe = np.where(norm > 0, norm, 1.0)
    return np.where((norm > 0)[..., None], v / safe[..., None], 0.0)


def _cross_frame(unit):
    """Stack of e_i x unit for i = 1, 2, 3 along axis -2."""
    return np.stack([np.cross(_EYE[i], unit) for i in range(3)], axis=-2)


def frame_vectors(v):
    """
    Radial and angular unit directions of a momentum.

    Parameters
    ----------
    v : array (..., 3)
        Non-zero momenta.

    Returns
    -------
    v_tilde : array (..., 3)
        v / |v|.

    V_tilde : array (..., 3, 3)
        V_tilde[..., i, :] = e_i x v / |v|. A row is the zero vector when v
        is parallel to e_i.
    """
    v = _as_vectors(v)
    if np.any(_norm(v) == 0):
        raise DegenerateDirectionError("frame vectors are undefined at v = 0")
    unit = _safe_unit(v)
    return unit, _cross_frame(unit)


def _safe_frame(v):
    """Frame vectors with zero directions at v = 0."""
    unit = _safe_unit(v)
    return unit, _cross_frame(unit)


def frame_reconstruction_residual(v, u):
    """Max |u - v~(v~.u) - sum_i V~_i (V~_i.u)| over the batch."""
    v_tilde, V_tilde = frame_vectors(v)
    u = _as_vectors(u)
    rebuilt = v_tilde * _dot(v_tilde, u)[..., None] + np.sum(
        V_tilde * np.einsum("...ij,...j->...i", V_tilde, u)[..., None], axis=-2
    )
    return np.max(_norm(u - rebuilt))


def unit_vector_identity_residual(v):
    """Residual of v~.grad_v(hat v) = v~/gamma^3 and V~_i.grad_v(hat v) = V~_i/gamma."""
    v_tilde, V_tilde = frame_vectors(v)
    jac = grad_hat_v(v)
    gamma = lorentz_factor(v)
    radial = np.einsum("...j,...jk->...k", v_tilde, jac) - v_tilde / gamma[..., None] ** 3
    angular = np.einsum("...ij,...jk->...ik", V_tilde, jac) - V_tilde / gamma[..., None, None]
    return max(np.max(_norm(radial)), np.max(np.abs(angular)))


def _plus_root(a, q):
    """a + sqrt(a^2 + q) without cancellation, for q >= 0."""
    root = np.sqrt(a * a + q)
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.where(root - a > 0, q / (root - a), 0.0)
    return np.where(a >= 0, a + root, small)


def _minus_root(a, q):
    """a - sqrt(a^2 + q) without cancellation, for q >= 0."""
    return -_plus_root(-a, q)


def omega_good_unknown(x, v):
    """
    Good unknown psi_{>=0}(|x|^2 + (x.v)^2) (x.v + sqrt((x.v)^2 + |x|^2)).

    The cutoff is applied verbatim to the mixed quantity |x|^2 + (x.v)^2.
    """
    x, v = _as_vectors(x), _as_vectors(v)
    a = _dot(x, v)
    q = _dot(x, x)
    return CUTOFF.psi_ge(q + a * a, 0) * _plus_root(a, q)


def omega_gradient(x, v):
    """Analytic (grad_x omega, grad_v omega)."""
    x, v = _as_vectors(x), _as_vectors(v)
    a = _dot(x, v)
    q = _dot(x, x)
    s = q + a * a
    # sqrt(a^2 + |x|^2) coincides with sqrt(s)
    root = np.sqrt(s)
    plus = _plus_root(a, q)
    cut = CUTOFF.psi_ge(s, 0)
    dcut = CUTOFF.psi_ge_derivative(s, 0)
    active = root > 0
    safe = np.where(active, root, 1.0)
    dP_da = np.where(active, plus / safe, 0.0)[..., None]
    inv_root = np.where(active, 1.0 / safe, 0.0)[..., None]

    grad_x_P = dP_da * v + inv_root * x
    grad_v_P = dP_da * x
    grad_x_s = 2.0 * x + 2.0 * a[..., None] * v
    grad_v_s = 2.0 * a[..., None] * x

    grad_x = (dcut * plus)[..., None] * grad_x_s + cut[..., None] * grad_x_P
    grad_v = (dcut * plus)[..., None] * grad_v_s + cut[..., None] * grad_v_P
    return grad_x, grad_v


def modulation_d(t, x, v):
    """Homogeneous modulation t/gamma^2 - (x.v + sqrt((x.v)^2 + |x|^2))/gamma."""
    x, v = _as_vectors(x), _as_vectors(v)
    gamma = lorentz_factor(v)
    return np.asarray(t, dtype=float) / gamma**2 - _plus_root(_dot(x, v), _dot(x, x)) / gamma


def modulation_d_tilde(t, x, v):
    """Inhomogeneous modulation t/gamma^2 - omega(x, v)/gamma."""
    gamma = lorentz_factor(v)
    return np.asarray(t, dtype=float) / gamma**2 - omega_good_unknown(x, v) / gamma


def d_tilde_gradient(t, x, v):
    """Analytic (d_t, grad_x, grad_v) of the inhomogeneous modulation."""
    x, v = _as_vectors(x), _as_vectors(v)
    t = np.asarray(t, dtype=float)
    gamma = lorentz_factor(v)
    omega = omega_good_unknown(x, v)
    grad_x_omega, grad_v_omega = omega_gradient(x, v)
    d_t = np.broadcast_to(1.0 / gamma**2, np.broadcast(t, gamma).shape)
    grad_x = -grad_x_omega / gamma[..., None]
    grad_v = (
        -2.0 * (t / gamma**4)[..., None] * v
        - grad_v_omega / gamma[..., None]
        + (omega / gamma**3)[..., None] * v
    )
    return d_t, grad_x, grad_v


def cone_identity_residual(t, x, v):
    """
    |t|^2 - |x + v^ t|^2 - d (t - gamma (x.v - sqrt((x.v)^2 + |x|^2))).

    Returned as an absolute value; divide by `cone_identity_scale` for the
    relative residual.
    """
    x, v = _as_vectors(x), _as_vectors(v)
    t = np.asarray(t, dtype=float)
    gamma = lorentz_factor(v)
    y = x + hat_v(v) * t[..., None]
    lhs = t * t - _dot(y, y)
    rhs = modulation_d(t, x, v) * (t - gamma * _minus_root(_dot(x, v), _dot(x, x)))
    return np.abs(lhs - rhs)


def cone_identity_scale(t, x, v):
    """Magnitude of the terms entering the cone identity."""
    x, v = _as_vectors(x), _as_vectors(v)
    t = np.asarray(t, dtype=float)
    y = x + hat_v(v) * t[..., None]
    return t * t + _dot(y, y) + _dot(x, x) + 2.0 * np.abs(t * _dot(x, v)) / lorentz_factor(v)


def cone_distance(t, x, v):
    """||t| - |x + v^ t||, the distance to the light cone along the ray."""
    x = _as_vectors(x)
    t = np.asarray(t, dtype=float)
    return np.abs(np.abs(t) - _norm(x + hat_v(v) * t[..., None]))


def bump_f(s):
    """exp(-1/(1 - 32 s)) on [0, 1/32), zero elsewhere; non-increasing."""
    s = np.asarray(s, dtype=float)
    inside = (s >= 0) & (s < 2.0**-5)
    safe = np.where(inside, 1.0 - 32.0 * s, 1.0)
    return np.where(inside, np.exp(-1.0 / safe), 0.0)


def step_eta(s):
    """Mollified step: 1 on (-inf, -20], 0 on [-10, inf)."""
    return smooth_step((-10.0 - np.asarray(s, dtype=float)) / 10.0)


def weight_phi(t, x, v):
    """Time dependent weight phi(t, x, v) >= 1."""
    x, v = _as_vectors(x), _as_vectors(v)
    t = np.asarray(t, dtype=float)
    x_norm, v_norm = _norm(x), _norm(v)
    product = x_norm * v_norm
    with np.errstate(divide="ignore"):
        ratio = np.where(product > 0, (1.0 + np.abs(t)) / np.where(product > 0, product, 1.0), np.inf)
    subtracted = (
        _dot(x, v)
        / (1.0 + x_norm)
        * bump_f(ratio)
        * step_eta(_dot(x, _safe_unit(v)))
        * CUTOFF.psi_ge(v_norm, 1)
    )
    return 1.0 - subtracted


def d_tilde_cone_ratio(t, x, v):
    """|d~| / (1 + ||t| - |x + v^ t||); bounded on samples."""
    return np.abs(modulation_d_tilde(t, x, v)) / (1.0 + cone_distance(t, x, v))


def d_tilde_phi_ratio(t, x, v):
    """|d~ phi| / (1 + ||t| - |x + v^ t||), the modulation against the time dependent weight."""
    return np.abs(modulation_d_tilde(t, x, v) * weight_phi(t, x, v)) / (1.0 + cone_distance(t, x, v))


def _check_weight_order(order_alpha, order_beta, c_index, i_index, n_desk):
    """Validate the weight indices against the desk-scale hierarchy."""
    errors = []
    if min(order_alpha, order_beta, c_index, i_index) < 0:
        errors.append("indices must be non-negative")
    if order_alpha + order_beta > WEIGHT_TRUNCATION:
        errors.append(f"|alpha| + |beta| must not exceed {WEIGHT_TRUNCATION}")
    if 20 * n_desk - 10 * (order_alpha + order_beta) < 0:
        errors.append("polynomial exponent would be negative")
    if order_beta - i_index < 0:
        errors.append("phi exponent |beta| - i(beta) would be negative")
    if errors:
        raise WeightOrderError(
            f"invalid weight request (alpha={order_alpha}, beta={order_beta}, "
            f"c={c_index}, i={i_index}): " + "; ".join(errors)
        )


def log_weight_omega(order, c_index, i_index, t, x, v, n_desk=DESK_N):
    """Natural logarithm of `weight_omega`; finite where the weight overflows."""
    order_alpha, order_beta = order
    _check_weight_order(order_alpha, order_beta, c_index, i_index, n_desk)
    x, v = _as_vectors(x), _as_vectors(v)
    a = _dot(x, v)
    v_sq = _dot(v, v)
    base = 1.0 + _dot(x, x) + a * a + v_sq**10
    log_w = (20 * n_desk - 10 * (order_alpha + order_beta)) * np.log(base)
    log_w = log_w + c_index * np.log1p(np.sqrt(v_sq))
    phi_power = order_beta - i_index
    if phi_power:
        log_w = log_w + phi_power * np.log(weight_phi(t, x, v))
    return log_w


def weight_omega(order, c_index, i_index, t, x, v, n_desk=DESK_N):
    """
    Energy weight omega^alpha_beta at desk scale.

    Parameters
    ----------
    order : tuple of int
        (|alpha|, |beta|), with |alpha| + |beta| <= 2.

    c_index, i_index : int
        Number of good derivatives c(beta) and of Omega^x derivatives i(beta).

    Returns
    -------
    weight : array
        (1 + |x|^2 + (x.v)^2 + |v|^20)^(20N - 10(|alpha|+|beta|))
        (1 + |v|)^c phi^(|beta| - i). Values beyond the double range become
        inf; use `log_weight_omega` for ratios.
    """
    with np.errstate(over="ignore"):
        return np.exp(log_weight_omega(order, c_index, i_index, t, x, v, n_desk))


class WeightFunction:
    """
    Weight omega^alpha_beta bound to fixed derivative indices.

    Parameters
    ----------
    order_alpha, order_beta : int
        Orders of the spatial and Gamma derivatives.

    c_index, i_index : int
        Good derivative counts.

    n_desk : int
        Desk-scale replacement of the top derivative order.
    """

    def __init__(self, order_alpha=0, order_beta=0, c_index=0, i_index=0, n_desk=DESK_N):
        """Default parameters."""
        _check_weight_order(order_alpha, order_beta, c_index, i_index, n_desk)
        self.order_alpha = order_alpha
        self.order_beta = order_beta
        self.c_index = c_index
        self.i_index = i_index
        self.n_desk = n_desk

    @property
    def order_total(self):
        return self.order_alpha + self.order_beta

    def phi(self, t, x, v):
        return weight_phi(t, x, v)

    def log(self, t, x, v):
        return log_weight_omega(
            (self.order_alpha, self.order_beta), self.c_index, self.i_index, t, x, v, self.n_desk
        )

    def __call__(self, t, x, v):
        with np.errstate(over="ignore"):
            return np.exp(self.log(t, x, v))


def null_phase(v, xi, mu=1):
    """Oscillation phase |xi| - mu v^.xi, non-negative for mu = +1 or -1."""
    v, xi = _as_vectors(v), _as_vectors(xi)
    xi_norm = _norm(xi)
    if np.any(xi_norm == 0):
        raise DegenerateDirectionError("the phase is undefined at xi = 0")
    if mu not in (1, -1):
        raise ValueError(f"mu must be +1 or -1, got {mu}")
    return xi_norm - mu * _dot(hat_v(v), xi)


def null_phase_ratio(v, xi):
    """Phase divided by |xi| (1/gamma^2 + sum_i (V~_i . xi/|xi|)^2)."""
    v, xi = _as_vectors(v), _as_vectors(xi)
    phase = null_phase(v, xi, 1)
    xi_norm = _norm(xi)
    _, V_tilde = _safe_frame(v)
    angular = np.sum(np.einsum("...ij,...j->...i", V_tilde, xi / xi_norm[..., None]) ** 2, axis=-1)
    return phase / (xi_norm * (1.0 / lorentz_factor(v) ** 2 + angular))
