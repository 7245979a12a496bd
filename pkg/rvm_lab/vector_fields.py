"""Executable vector fields of the relativistic transport and the
finite-difference engine verifying their identities.

Authors: rvm_lab team
"""
import numpy as np
from sklearn.utils import check_random_state

from . import geometry as geo

_EYE = np.eye(3)

# 4th-order centered first derivative
_STENCIL_OFFSETS = (-2, -1, 1, 2)
_STENCIL_WEIGHTS = (1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0)

N_SLOTS = 17


class RoundoffDominationError(ValueError):
    """Raised when a Richardson sequence stops decreasing."""


def _points(t, x, v):
    """Cast a sample batch and broadcast t to its shape."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    shape = np.broadcast_shapes(x.shape[:-1], v.shape[:-1], np.shape(t))
    t = np.broadcast_to(np.asarray(t, dtype=float), shape)
    x = np.broadcast_to(x, shape + (3,))
    v = np.broadcast_to(v, shape + (3,))
    return t, x, v


def _unit(i, shape):
    return np.broadcast_to(_EYE[i], shape + (3,))


class AnisotropicGaussian:
    """
    amplitude * exp(-((t-t0)/w_t)^2 - |(x-x0)/w_x|^2 - |(v-v0)/w_v|^2).

    Widths are per axis, so the function is anisotropic in x and v.
    """

    def __init__(
        self,
        center_t=0.0,
        center_x=(0.0, 0.0, 0.0),
        center_v=(0.0, 0.0, 0.0),
        width_t=1.0,
        width_x=(1.0, 1.0, 1.0),
        width_v=(1.0, 1.0, 1.0),
        amplitude=1.0,
    ):
        """Default parameters."""
        self.center_t = float(center_t)
        self.center_x = np.asarray(center_x, dtype=float)
        self.center_v = np.asarray(center_v, dtype=float)
        self.width_t = float(width_t)
        self.width_x = np.asarray(width_x, dtype=float)
        self.width_v = np.asarray(width_v, dtype=float)
        self.amplitude = float(amplitude)

    def value(self, t, x, v):
        t, x, v = _points(t, x, v)
        z = (
            ((t - self.center_t) / self.width_t) ** 2
            + np.sum(((x - self.center_x) / self.width_x) ** 2, axis=-1)
            + np.sum(((v - self.center_v) / self.width_v) ** 2, axis=-1)
        )
        return self.amplitude * np.exp(-z)

    def gradient(self, t, x, v):
        t, x, v = _points(t, x, v)
        f = self.value(t, x, v)
        d_t = -2.0 * (t - self.center_t) / self.width_t**2 * f
        g_x = -2.0 * (x - self.center_x) / self.width_x**2 * f[..., None]
        g_v = -2.0 * (v - self.center_v) / self.width_v**2 * f[..., None]
        return d_t, g_x, g_v


class PolynomialGaussian:
    """Affine polynomial c0 + c_t t + c_x.x + c_v.v times a Gaussian."""

    def __init__(self, gaussian, c0=1.0, c_t=0.0, c_x=(0.0, 0.0, 0.0), c_v=(0.0, 0.0, 0.0)):
        """Default parameters."""
        self.gaussian = gaussian
        self.c0 = float(c0)
        self.c_t = float(c_t)
        self.c_x = np.asarray(c_x, dtype=float)
        self.c_v = np.asarray(c_v, dtype=float)

    def _poly(self, t, x, v):
        return self.c0 + self.c_t * t + x @ self.c_x + v @ self.c_v

    def value(self, t, x, v):
        t, x, v = _points(t, x, v)
        return self._poly(t, x, v) * self.gaussian.value(t, x, v)

    def gradient(self, t, x, v):
        t, x, v = _points(t, x, v)
        p = self._poly(t, x, v)
        g = self.gaussian.value(t, x, v)
        d_t, g_x, g_v = self.gaussian.gradient(t, x, v)
        return (
            self.c_t * g + p * d_t,
            self.c_x * g[..., None] + p[..., None] * g_x,
            self.c_v * g[..., None] + p[..., None] * g_v,
        )


class AnalyticFunction:
    """Scalar function given by value and gradient closures."""

    def __init__(self, value, gradient, name="f"):
        """Default parameters."""
        self._value = value
        self._gradient = gradient
        self.name = name

    def value(self, t, x, v):
        return self._value(*_points(t, x, v))

    def gradient(self, t, x, v):
        return self._gradient(*_points(t, x, v))


class ModulationFunction:
    """The inhomogeneous modulation as a test function."""

    def value(self, t, x, v):
        return geo.modulation_d_tilde(*_points(t, x, v))

    def gradient(self, t, x, v):
        return geo.d_tilde_gradient(*_points(t, x, v))


def test_function_corpus(seed=0, count=12):
    """Seeded anisotropic Gaussians with widths in [1/2, 2]."""
    rng = check_random_state(seed)
    corpus = []
    for _ in range(count):
        corpus.append(
            AnisotropicGaussian(
                center_t=rng.uniform(-1.0, 1.0),
                center_x=rng.uniform(-1.0, 1.0, size=3),
                center_v=rng.uniform(-1.0, 1.0, size=3),
                width_t=rng.uniform(0.5, 2.0),
                width_x=rng.uniform(0.5, 2.0, size=3),
                width_v=rng.uniform(0.5, 2.0, size=3),
            )
        )
    return corpus


# not a pytest test
test_function_corpus.__test__ = False


class DifferentialOperator:
    """
    First-order operator coeff_t d_t + coeff_x . grad_x + coeff_v . grad_v.

    Parameters
    ----------
    name : str
        Tag identifying the vector field.

    coeff_t, coeff_x, coeff_v : callable or None
        Closures (t, x, v) -> array; None stands for a zero coefficient.

    conformal : callable or None
        Factor lambda with [d_t + v^.grad_x, op] = lambda (d_t + v^.grad_x).
        None means the operator commutes with free transport.
    """

    def __init__(self, name, coeff_t=None, coeff_x=None, coeff_v=None, conformal=None):
        """Default parameters."""
        self.name = name
        self.coeff_t = coeff_t
        self.coeff_x = coeff_x
        self.coeff_v = coeff_v
        self.conformal = conformal

    def __repr__(self):
        return f"DifferentialOperator({self.name!r})"

    def coefficients(self, t, x, v):
        """Evaluate (coeff_t, coeff_x, coeff_v) on a batch, zeros filled in."""
        t, x, v = _points(t, x, v)
        c_t = self.coeff_t(t, x, v) if self.coeff_t else np.zeros(t.shape)
        c_x = self.coeff_x(t, x, v) if self.coeff_x else np.zeros(x.shape)
        c_v = self.coeff_v(t, x, v) if self.coeff_v else np.zeros(v.shape)
        return (
            np.broadcast_to(c_t, t.shape),
            np.broadcast_to(c_x, x.shape),
            np.broadcast_to(c_v, v.shape),
        )

    def conformal_factor(self, t, x, v):
        t, x, v = _points(t, x, v)
        if self.conformal is None:
            return np.zeros(t.shape)
        return np.broadcast_to(self.conformal(t, x, v), t.shape)


def _contract(coefficients, gradient):
    c_t, c_x, c_v = coefficients
    d_t, g_x, g_v = gradient
    return c_t * d_t + np.sum(c_x * g_x, axis=-1) + np.sum(c_v * g_v, axis=-1)


def apply(op, f, t, x, v):
    """Apply an operator to a test function using its analytic derivatives."""
    t, x, v = _points(t, x, v)
    return _contract(op.coefficients(t, x, v), f.gradient(t, x, v))


def combine(ops, weights, name="combination"):
    """Pointwise combination sum_k weights[k](t, x, v) * ops[k]."""

    def _part(attr):
        def coefficient(t, x, v):
            total = 0.0
            for op, weight in zip(ops, weights):
                w = weight(t, x, v)
                c = op.coefficients(t, x, v)[attr]
                total = total + (w[..., None] * c if c.ndim > w.ndim else w * c)
            return total

        return coefficient

    return DifferentialOperator(name, _part(0), _part(1), _part(2))


def _scaled(op, factor, name):
    """Multiply every coefficient of op by the scalar closure factor."""

    def _part(attr):
        def coefficient(t, x, v):
            c = op.coefficients(t, x, v)[attr]
            s = factor(t, x, v)
            return s[..., None] * c if c.ndim > s.ndim else s * c

        return coefficient

    return DifferentialOperator(name, _part(0), _part(1), _part(2))


def _speed(v):
    return np.sqrt(np.sum(v * v, axis=-1))


def _high(t, x, v):
    return geo.psi_ge(_speed(v), 1)


def _low(t, x, v):
    return geo.psi_le(_speed(v), 0)


def partial_t():
    return DifferentialOperator("d_t", coeff_t=lambda t, x, v: np.ones(t.shape))


def partial_x(i):
    return DifferentialOperator(f"d_x{i + 1}", coeff_x=lambda t, x, v: _unit(i, t.shape))


def partial_v(i):
    return DifferentialOperator(f"d_v{i + 1}", coeff_v=lambda t, x, v: _unit(i, t.shape))


def scaling():
    return DifferentialOperator(
        "S",
        coeff_t=lambda t, x, v: t,
        coeff_x=lambda t, x, v: x,
        conformal=lambda t, x, v: np.ones(t.shape),
    )


def rotation(i):
    return DifferentialOperator(f"Omega{i + 1}", coeff_x=lambda t, x, v: np.cross(_EYE[i], x))


def lorentz(i):
    return DifferentialOperator(
        f"L{i + 1}",
        coeff_t=lambda t, x, v: x[..., i],
        coeff_x=lambda t, x, v: t[..., None] * _EYE[i],
    )


def rotation_tilde(i):
    return DifferentialOperator(
        f"Omega~{i + 1}",
        coeff_x=lambda t, x, v: np.cross(_EYE[i], x),
        coeff_v=lambda t, x, v: np.cross(_EYE[i], v),
    )


def lorentz_tilde(i):
    return DifferentialOperator(
        f"L~{i + 1}",
        coeff_t=lambda t, x, v: x[..., i],
        coeff_x=lambda t, x, v: t[..., None] * _EYE[i],
        coeff_v=lambda t, x, v: geo.lorentz_factor(v)[..., None] * _EYE[i],
        conformal=lambda t, x, v: geo.hat_v(v)[..., i],
    )


def D_v(i):
    """Component i of D_v = grad_v - t grad_v(v^) . grad_x."""
    return DifferentialOperator(
        f"D_v{i + 1}",
        coeff_x=lambda t, x, v: -t[..., None] * geo.grad_hat_v(v)[..., i, :],
        coeff_v=lambda t, x, v: _unit(i, t.shape),
    )


def K_v(i):
    """Component i of K_v = grad_v - gamma omega grad_v(v^) . grad_x."""
    return DifferentialOperator(
        f"K_v{i + 1}",
        coeff_x=lambda t, x, v: -(geo.lorentz_factor(v) * geo.omega_good_unknown(x, v))[..., None]
        * geo.grad_hat_v(v)[..., i, :],
        coeff_v=lambda t, x, v: _unit(i, t.shape),
    )


def K_tilde_v(i):
    """Component i of K_v pulled back along free transport."""

    def coeff_x(t, x, v):
        shift = t - geo.lorentz_factor(v) * geo.omega_good_unknown(
            x - geo.hat_v(v) * t[..., None], v
        )
        return shift[..., None] * geo.grad_hat_v(v)[..., i, :]

    return DifferentialOperator(
        f"K~_v{i + 1}", coeff_x=coeff_x, coeff_v=lambda t, x, v: _unit(i, t.shape)
    )


def S_x():
    return DifferentialOperator("S^x", coeff_x=lambda t, x, v: geo._safe_unit(v))


def S_v():
    return DifferentialOperator("S^v", coeff_v=lambda t, x, v: geo._safe_unit(v))


def Omega_x(i):
    return DifferentialOperator(f"Omega^x{i + 1}", coeff_x=lambda t, x, v: geo._safe_frame(v)[1][..., i, :])


def Omega_v(i):
    return DifferentialOperator(f"Omega^v{i + 1}", coeff_v=lambda t, x, v: geo._safe_frame(v)[1][..., i, :])


def S_v_hat():
    """Good derivative v~.grad_v - (omega / gamma^2) S^x."""

    def coeff_x(t, x, v):
        weight = geo.omega_good_unknown(x, v) / geo.lorentz_factor(v) ** 2
        return -weight[..., None] * geo._safe_unit(v)

    return DifferentialOperator("S^v_hat", coeff_x=coeff_x, coeff_v=lambda t, x, v: geo._safe_unit(v))


def Omega_hat(i):
    """V~_i.grad_v - omega Omega^x_i."""

    def coeff_x(t, x, v):
        return -geo.omega_good_unknown(x, v)[..., None] * geo._safe_frame(v)[1][..., i, :]

    return DifferentialOperator(
        f"Omega_hat{i + 1}",
        coeff_x=coeff_x,
        coeff_v=lambda t, x, v: geo._safe_frame(v)[1][..., i, :],
    )


def family_p2(rho):
    """Vector field Gamma_rho, rho = 1..17, acting on profiles."""
    if not 1 <= rho <= N_SLOTS:
        raise ValueError(f"rho must be in 1..{N_SLOTS}, got {rho}")
    if rho == 1:
        return _scaled(S_v_hat(), _high, "Gamma1")
    if rho == 2:
        return _scaled(S_x(), _high, "Gamma2")
    if rho <= 5:
        return _scaled(Omega_hat(rho - 3), _high, f"Gamma{rho}")
    if rho <= 8:
        return _scaled(Omega_x(rho - 6), _high, f"Gamma{rho}")
    if rho <= 11:
        return _scaled(K_v(rho - 9), _low, f"Gamma{rho}")
    if rho <= 14:
        return _scaled(partial_x(rho - 12), _low, f"Gamma{rho}")
    op = rotation_tilde(rho - 15)
    op.name = f"Gamma{rho}"
    return op


def good_derivative_counts(rho):
    """(c, i) contribution of Gamma_rho: S^v_hat and Omega^x are good, Omega^x also counts in i."""
    if rho in (6, 7, 8):
        return 1, 1
    if rho == 1:
        return 1, 0
    return 0, 0


def _zero(t, x, v):
    return np.zeros(x.shape)


class CoefficientTable:
    """
    Coefficients of the two decompositions of D_v over Gamma_1..Gamma_17.

    Attributes
    ----------
    d_rho : dict
        rho -> closure (t, x, v) -> (..., 3) for the first decomposition.

    e_rho : dict
        Same for the second decomposition, which trades Omega_hat for
        Omega~ and position-dependent coefficients.
    """

    def __init__(self, d_rho, e_rho):
        """Default parameters."""
        self.d_rho = d_rho
        self.e_rho = e_rho

    def table(self, which):
        if which == 1:
            return self.d_rho
        if which == 2:
            return self.e_rho
        raise ValueError(f"which must be 1 or 2, got {which}")


def _wide_high(v):
    return geo.psi_ge(_speed(v), -1)


def _wide_low(v):
    return geo.psi_le(_speed(v), 2)


def _frame(v):
    return geo._safe_frame(v)


def _d_tilde_over_gamma(t, x, v):
    return geo.modulation_d_tilde(t, x, v) / geo.lorentz_factor(v)


def _inverse_speed(v):
    speed = _speed(v)
    return np.where(speed > 0, 1.0 / np.where(speed > 0, speed, 1.0), 0.0)


def _low_dx_coefficient(i):
    def coefficient(t, x, v):
        gamma = geo.lorentz_factor(v)
        scale = -_wide_low(v) * geo.modulation_d_tilde(t, x, v) * gamma**2
        return scale[..., None] * geo.grad_hat_v(v)[..., :, i]

    return coefficient


def _low_kv_coefficient(i):
    return lambda t, x, v: _wide_low(v)[..., None] * _unit(i, t.shape)


def _first_table():
    d_rho = {
        1: lambda t, x, v: _wide_high(v)[..., None] * _frame(v)[0],
        2: lambda t, x, v: -(_wide_high(v) * _d_tilde_over_gamma(t, x, v))[..., None] * _frame(v)[0],
    }
    for i in range(3):
        d_rho[3 + i] = lambda t, x, v, i=i: _wide_high(v)[..., None] * _frame(v)[1][..., i, :]
        d_rho[6 + i] = (
            lambda t, x, v, i=i: -(_wide_high(v) * geo.lorentz_factor(v) * geo.modulation_d_tilde(t, x, v))[..., None]
            * _frame(v)[1][..., i, :]
        )
        d_rho[9 + i] = _low_kv_coefficient(i)
        d_rho[12 + i] = _low_dx_coefficient(i)
        d_rho[15 + i] = _zero
    return d_rho


def _second_table():
    def sx_coefficient(t, x, v):
        v_tilde, V_tilde = _frame(v)
        # X_i . v~ for X_i = e_i x x
        x_dot = np.stack([np.sum(np.cross(_EYE[i], x) * v_tilde, axis=-1) for i in range(3)], axis=-1)
        angular = np.sum(V_tilde * x_dot[..., None], axis=-2) * _inverse_speed(v)[..., None]
        return -_wide_high(v)[..., None] * (_d_tilde_over_gamma(t, x, v)[..., None] * v_tilde + angular)

    def omega_x_coefficient(i):
        def coefficient(t, x, v):
            _, V_tilde = _frame(v)
            v_hat = geo.hat_v(v)
            total = 0.0
            for j in range(3):
                arm = np.cross(_EYE[j], x) + np.cross(_EYE[j], v_hat) * t[..., None]
                total = total + V_tilde[..., j, :] * np.sum(arm * V_tilde[..., i, :], axis=-1)[..., None]
            return -(_wide_high(v) * _inverse_speed(v))[..., None] * total

        return coefficient

    def rotation_coefficient(i):
        def coefficient(t, x, v):
            scale = geo.psi_ge(_speed(v), 1) * _inverse_speed(v)
            return scale[..., None] * _frame(v)[1][..., i, :]

        return coefficient

    e_rho = {
        1: lambda t, x, v: _wide_high(v)[..., None] * _frame(v)[0],
        2: sx_coefficient,
    }
    for i in range(3):
        e_rho[3 + i] = _zero
        e_rho[6 + i] = omega_x_coefficient(i)
        e_rho[9 + i] = _low_kv_coefficient(i)
        e_rho[12 + i] = _low_dx_coefficient(i)
        e_rho[15 + i] = rotation_coefficient(i)
    return e_rho


def coefficient_table():
    """Closed-form coefficient tables of both D_v decompositions."""
    return CoefficientTable(_first_table(), _second_table())


_FAMILY = None


def _family():
    global _FAMILY
    if _FAMILY is None:
        _FAMILY = {rho: family_p2(rho) for rho in range(1, N_SLOTS + 1)}
    return _FAMILY


def decompose_Dv_residual(which, f, t, x, v, table=None):
    """
    |D_v f - sum_rho coeff_rho (Gamma_rho f)| per sample point.

    Parameters
    ----------
    which : int
        1 for the d_rho table, 2 for the e_rho table.

    f : test function

    table : CoefficientTable, optional
        Defaults to `coefficient_table()`.
    """
    t, x, v = _points(t, x, v)
    coefficients = (table or coefficient_table()).table(which)
    lhs = np.stack([apply(D_v(i), f, t, x, v) for i in range(3)], axis=-1)
    rhs = np.zeros(lhs.shape)
    for rho, gamma_rho in _family().items():
        rhs = rhs + coefficients[rho](t, x, v) * apply(gamma_rho, f, t, x, v)[..., None]
    return np.sqrt(np.sum((lhs - rhs) ** 2, axis=-1))


def coefficient_table_bound(t, x, v, table=None):
    """sum_rho |d_rho| (1+|v|)^(-c(rho)) / (1 + |d~|), the sampled-bound ratio."""
    t, x, v = _points(t, x, v)
    coefficients = (table or coefficient_table()).table(1)
    total = np.zeros(t.shape)
    for rho in range(1, N_SLOTS + 1):
        c_index, _ = good_derivative_counts(rho)
        norm = np.sqrt(np.sum(coefficients[rho](t, x, v) ** 2, axis=-1))
        total = total + norm * (1.0 + _speed(v)) ** (-c_index)
    return total / (1.0 + np.abs(geo.modulation_d_tilde(t, x, v)))


def good_derivative_residual(f, t, x, v):
    """|(v~ . K_v) f - (v~.grad_v - (omega/gamma^2) S^x) f| per point."""
    t, x, v = _points(t, x, v)
    weights = [lambda t, x, v, i=i: geo._safe_unit(v)[..., i] for i in range(3)]
    contracted = combine([K_v(i) for i in range(3)], weights, "v~.K_v")
    return np.abs(apply(contracted, f, t, x, v) - apply(S_v_hat(), f, t, x, v))


def fd_gradient(g, t, x, v, h):
    """4th-order centered (d_t, grad_x, grad_v) of a scalar closure g(t, x, v)."""
    t, x, v = _points(t, x, v)
    t, x, v = np.array(t), np.array(x), np.array(v)

    def derivative(shift):
        total = 0.0
        for offset, weight in zip(_STENCIL_OFFSETS, _STENCIL_WEIGHTS):
            total = total + weight * g(*shift(offset * h))
        return total / h

    d_t = derivative(lambda s: (t + s, x, v))
    g_x = np.stack(
        [derivative(lambda s, i=i: (t, x + s * _EYE[i], v)) for i in range(3)], axis=-1
    )
    g_v = np.stack(
        [derivative(lambda s, i=i: (t, x, v + s * _EYE[i])) for i in range(3)], axis=-1
    )
    return d_t, g_x, g_v


def _transport_fd(g, t, x, v, h):
    """(d_t + v^.grad_x) g by finite differences."""
    d_t, g_x, _ = fd_gradient(g, t, x, v, h)
    return d_t + np.sum(geo.hat_v(v) * g_x, axis=-1)


def _transport_exact(f):
    def transported(t, x, v):
        d_t, g_x, _ = f.gradient(t, x, v)
        return d_t + np.sum(geo.hat_v(v) * g_x, axis=-1)

    return transported


def transport_commutator(op, f, t, x, v, h):
    """[d_t + v^.grad_x, op] f - lambda_op (d_t + v^.grad_x) f at step h."""
    t, x, v = _points(t, x, v)
    outer = _transport_fd(lambda tt, xx, vv: apply(op, f, tt, xx, vv), t, x, v, h)
    transported = _transport_exact(f)
    inner = _contract(op.coefficients(t, x, v), fd_gradient(transported, t, x, v, h))
    return outer - inner - op.conformal_factor(t, x, v) * transported(t, x, v)


def commutator(op_a, op_b, f, t, x, v, h):
    """[A, B] f with the outer derivatives taken by finite differences."""
    t, x, v = _points(t, x, v)
    ab = _contract(op_a.coefficients(t, x, v), fd_gradient(lambda *p: apply(op_b, f, *p), t, x, v, h))
    ba = _contract(op_b.coefficients(t, x, v), fd_gradient(lambda *p: apply(op_a, f, *p), t, x, v, h))
    return ab - ba


class ConvergenceStudy:
    """
    Richardson sequence of a finite-difference residual.

    Attributes
    ----------
    steps : list of float
        h, h/2, h/4.

    differences : tuple of float
        Max |c(h) - c(h/2)| and |c(h/2) - c(h/4)| over the batch.

    order : float or None
        Observed order log2 of the difference ratio; None when both
        differences sit below the roundoff floor.

    residual : float
        Max |extrapolated value| over the batch.
    """

    def __init__(self, steps, values, order, residual, differences):
        """Default parameters."""
        self.steps = steps
        self.values = values
        self.order = order
        self.residual = residual
        self.differences = differences

    @property
    def exact(self):
        return self.order is None

    def __repr__(self):
        return f"ConvergenceStudy(order={self.order}, residual={self.residual:.3e})"


def richardson_study(evaluate, h, roundoff_floor=1e-9):
    """
    Run evaluate(h), evaluate(h/2), evaluate(h/4) and extrapolate.

    Raises
    ------
    RoundoffDominationError
        When the differences are above the floor and do not decrease.
    """
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    steps = [h, h / 2.0, h / 4.0]
    values = [np.asarray(evaluate(step), dtype=float) for step in steps]
    first = float(np.max(np.abs(values[0] - values[1])))
    second = float(np.max(np.abs(values[1] - values[2])))
    if first <= roundoff_floor and second <= roundoff_floor:
        return ConvergenceStudy(steps, values, None, float(np.max(np.abs(values[2]))), (first, second))
    if not second < first:
        raise RoundoffDominationError(
            f"Richardson sequence is not decreasing at h={h:g} "
            f"(differences {first:.3e} then {second:.3e}); the step is roundoff dominated"
        )
    order = np.log2(first / second) if second > 0 else np.inf
    if np.isfinite(order):
        extrapolated = values[2] + (values[2] - values[1]) / (2.0**order - 1.0)
    else:
        extrapolated = values[2]
    return ConvergenceStudy(steps, values, float(order), float(np.max(np.abs(extrapolated))), (first, second))


def commutator_convergence_study(op, f, t, x, v, h=1e-3, roundoff_floor=1e-9):
    """Convergence study of the transport commutator residual."""
    return richardson_study(lambda step: transport_commutator(op, f, t, x, v, step), h, roundoff_floor)


def transport_commutator_residual(op, f, t, x, v, h=1e-3, roundoff_floor=1e-9):
    """Richardson-extrapolated residual of [d_t + v^.grad_x, op] f."""
    return commutator_convergence_study(op, f, t, x, v, h, roundoff_floor).residual


def commutation_rule_residual(i, j, f, t, x, v, h=1e-3, roundoff_floor=1e-9):
    """|[d_{v_i}, L~_j] f - (v_i / gamma) d_{v_j} f| after extrapolation."""
    expected = apply(
        _scaled(partial_v(j), lambda t, x, v: v[..., i] / geo.lorentz_factor(v), "rule"), f, t, x, v
    )
    study = richardson_study(
        lambda step: commutator(partial_v(i), lorentz_tilde(j), f, t, x, v, step) - expected,
        h,
        roundoff_floor,
    )
    return study.residual


def trading_identity_residual(i, f, t, x):
    """
    Residual of trading one spatial derivative for S, L_i and rotations.

    (|t| - |x|) d_i f = sum_j (-x_j / (|t|+|x|)) Omega_ij f
    + (t / (|t|+|x|)) L_i f - (x_i / (|t|+|x|)) S f,
    with Omega_ij = x_j d_i - x_i d_j. The function f is evaluated at v = 0.
    """
    x = np.asarray(x, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
    radius = np.sqrt(np.sum(x * x, axis=-1))
    total = np.abs(t) + radius
    if np.any(total == 0):
        raise geo.DegenerateDirectionError("the trading identity needs |t| + |x| > 0")
    v = np.zeros(x.shape)
    d_t, g_x, _ = f.gradient(t, x, v)
    lhs = (np.abs(t) - radius) * g_x[..., i]
    rotations = sum(-x[..., j] * (x[..., j] * g_x[..., i] - x[..., i] * g_x[..., j]) for j in range(3))
    boost = t * g_x[..., i] + x[..., i] * d_t
    scale = t * d_t + np.sum(x * g_x, axis=-1)
    rhs = (rotations + t * boost - x[..., i] * scale) / total
    return np.abs(lhs - rhs)


def lambda_rho_dtilde_ratio(rho, t, x, v):
    """|Gamma_rho d~| / (1 + |d~|)."""
    modulation = ModulationFunction()
    value = modulation.value(t, x, v)
    return np.abs(apply(_family()[rho], modulation, t, x, v)) / (1.0 + np.abs(value))


def lorentz_force(E_fn, B_fn):
    """Closure (t, x, v) -> E(t, x) + v^ x B(t, x) of field closures (t, x) -> (..., 3)."""

    def force(t, x, v):
        E = np.broadcast_to(E_fn(t, x), x.shape)
        B = np.broadcast_to(B_fn(t, x), x.shape)
        return E + np.cross(geo.hat_v(v), B)

    return force


def force_divergence(force_fn, t, x, v, h):
    """4th-order centered div_v of a vector closure force_fn(t, x, v) -> (..., 3)."""
    t, x, v = _points(t, x, v)
    total = 0.0
    for j in range(3):
        for offset, weight in zip(_STENCIL_OFFSETS, _STENCIL_WEIGHTS):
            total = total + weight * force_fn(t, x, v + offset * h * _EYE[j])[..., j]
    return total / h


def div_v_force_residual(E_fn, B_fn, t, x, v, h=1e-3):
    """|div_v (E + v^ x B)| by differences in v of the assembled force."""
    return np.abs(force_divergence(lorentz_force(E_fn, B_fn), t, x, v, h))


def weight_ratio(weight, t, x, v, h=1e-4):
    """|D_v omega| / omega / (1 + ||t| - |x + v^ t||), with D_v taken on log omega."""
    t, x, v = _points(t, x, v)
    _, g_x, g_v = fd_gradient(weight.log, t, x, v, h)
    d_v = g_v - t[..., None] * np.einsum("...ij,...j->...i", geo.grad_hat_v(v), g_x)
    return np.sqrt(np.sum(d_v**2, axis=-1)) / (1.0 + geo.cone_distance(t, x, v))
