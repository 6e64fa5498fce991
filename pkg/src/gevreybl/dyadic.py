"""Littlewood-Paley blocks and Bony para-products in the tangential variable.

Block ``k = -1`` is the low-frequency piece ``chi(|xi|)``; block ``k >= 0`` is
``phi(2^-k |xi|)`` with ``phi(xi) = chi(xi/2) - chi(xi)``.  The low-frequency
cut-off is taken literally as ``S_k = chi(2^-k |xi|)`` for every integer ``k``,
so that ``S_{-1}`` and ``S_{-2}`` keep the zero mode.  With this convention
``T_1 g = g`` and the para-product/remainder split below is exact.

Products are formed on the 3/2-padded grid and projected back once, so every
identity that is bilinear in the blocks (Bony's in particular) holds to
round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ConfigurationError, Field, Grid, pad_irfft, truncate_rfft

CHI_INNER = 0.75
CHI_OUTER = 4.0 / 3.0


def _smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def chi(xi):
    """Radial bump: 1 on |xi| <= 3/4, 0 on |xi| >= 4/3."""
    r = np.abs(np.asarray(xi, dtype=float))
    return _smooth_step((CHI_OUTER - r) / (CHI_OUTER - CHI_INNER))


def phi(xi):
    """Annulus bump supported in 3/4 <= |xi| <= 8/3."""
    r = np.abs(np.asarray(xi, dtype=float))
    return chi(r / 2.0) - chi(r)


@dataclass(frozen=True)
class DyadicPartition:
    grid: Grid
    chi_samples: np.ndarray
    phi_samples_per_block: tuple
    k_max: int

    def block_symbol(self, k: int) -> np.ndarray:
        if k <= -2 or k > self.k_max:
            return np.zeros(self.grid.nk)
        if k == -1:
            return self.chi_samples
        return self.phi_samples_per_block[k]

    def cutoff_symbol(self, k: int) -> np.ndarray:
        return chi(self.grid.xi * 2.0 ** (-k))

    @property
    def blocks(self) -> range:
        return range(-1, self.k_max + 1)

    def to_csv(self, path) -> None:
        cols = [self.grid.xi, self.chi_samples, *self.phi_samples_per_block]
        header = "xi,chi," + ",".join(f"phi_{k}" for k in range(self.k_max + 1))
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="")


_PARTITIONS: dict = {}


def make_partition(grid: Grid) -> DyadicPartition:
    """Sample the dyadic partition of unity on the grid's frequencies."""
    if grid in _PARTITIONS:
        return _PARTITIONS[grid]
    xi = grid.xi
    if grid.nk < 8:
        raise ConfigurationError("need at least 8 x-modes for a dyadic partition")
    if not np.any((xi >= CHI_INNER) & (xi <= 2 * CHI_OUTER)):
        raise ConfigurationError("no grid frequency falls in block k=0; increase Lx or Nx")
    k_max = int(np.floor(np.log2(xi[-1] / CHI_INNER)))
    while CHI_INNER * 2.0**k_max >= xi[-1]:
        k_max -= 1
    phis = tuple(phi(xi * 2.0 ** (-k)) for k in range(k_max + 1))
    part = DyadicPartition(grid, chi(xi), phis, k_max)
    _PARTITIONS[grid] = part
    return part


def dyadic_block(f: Field, k: int) -> Field:
    """Delta_k f."""
    return Field(f.grid, spec=f.spec * make_partition(f.grid).block_symbol(k))


def low_freq_cutoff(f: Field, k: int) -> Field:
    """S_k f = F^-1(chi(2^-k |xi|) f^)."""
    return Field(f.grid, spec=f.spec * make_partition(f.grid).cutoff_symbol(k))


def _block_stack(spec: np.ndarray, part: DyadicPartition) -> np.ndarray:
    syms = np.stack([part.block_symbol(k) for k in part.blocks])
    return spec[None, ...] * syms[:, None, :]


def _cutoff_stack(spec: np.ndarray, part: DyadicPartition) -> np.ndarray:
    syms = np.stack([part.cutoff_symbol(k - 1) for k in part.blocks])
    return spec[None, ...] * syms[:, None, :]


def _same_grid(f: Field, g: Field):
    f._check(g)
    return f.grid


def paraproduct(f: Field, g: Field) -> Field:
    """T_f g = sum_{k >= -1} S_{k-1} f * Delta_k g."""
    grid = _same_grid(f, g)
    part = make_partition(grid)
    N = grid.Nx
    low = pad_irfft(_cutoff_stack(f.spec, part), N)
    high = pad_irfft(_block_stack(g.spec, part), N)
    return Field(grid, spec=truncate_rfft(np.einsum("kyx,kyx->yx", low, high), N))


def remainder(f: Field, g: Field) -> Field:
    """Diagonal part of the product, with the two lowest-block overlaps removed.

    The literal ``S_{-1}`` and ``S_{-2}`` both see the zero mode, so the pairs
    (S_{-1}f, Delta_0 g) and (S_{-2}f, Delta_{-1}g) are already counted in
    ``T_f g``; subtracting them (and the mirror pairs) makes
    ``fg = T_f g + T_g f + R(f, g)`` exact and keeps R symmetric.
    """
    grid = _same_grid(f, g)
    part = make_partition(grid)
    N = grid.Nx
    F = pad_irfft(_block_stack(f.spec, part), N)
    G = pad_irfft(_block_stack(g.spec, part), N)
    acc = np.einsum("kyx,kyx->yx", F, G)
    acc += np.einsum("kyx,kyx->yx", F[:-1], G[1:])
    acc += np.einsum("kyx,kyx->yx", F[1:], G[:-1])
    # index 0 is block -1, index 1 is block 0
    Sm1 = lambda h: pad_irfft(h.spec * part.cutoff_symbol(-1), N)
    Sm2 = lambda h: pad_irfft(h.spec * part.cutoff_symbol(-2), N)
    acc -= Sm1(f) * G[1] + Sm2(f) * G[0] + Sm1(g) * F[1] + Sm2(g) * F[0]
    return Field(grid, spec=truncate_rfft(acc, N))


def paraproduct_adjoint(a: Field, g: Field) -> Field:
    """(T_a)^* g, the L^2 adjoint of the dealiased para-product."""
    grid = _same_grid(a, g)
    part = make_partition(grid)
    N = grid.Nx
    low = pad_irfft(_cutoff_stack(a.spec, part), N)
    proj = truncate_rfft(low * pad_irfft(g.spec, N)[None], N)
    syms = np.stack([part.block_symbol(k) for k in part.blocks])
    return Field(grid, spec=np.einsum("kyj,kj->yj", proj, syms))


def bracket_power(f: Field, s: float) -> Field:
    """<D_x>^s f."""
    return Field(f.grid, spec=f.spec * f.grid.bracket**s)


# ---------------------------------------------------------------- commutators

def _hs_rows2(f: Field, s: float, lift=None) -> np.ndarray:
    """Row-wise squared H^s_x norms (optionally after a Fourier lift)."""
    g = f.grid
    c = f.spec if lift is None else f.spec * lift
    return g.Lx * np.sum(g.mode_weight * g.bracket ** (2 * s) * np.abs(c) ** 2, axis=-1)


def _l2y_hs(f: Field, s: float, lift=None) -> float:
    return float(np.sqrt(np.trapezoid(_hs_rows2(f, s, lift), dx=f.grid.dy)))


def _linf_y_hs(f: Field, s: float, lift=None) -> float:
    return float(np.sqrt(np.max(_hs_rows2(f, s, lift))))


def commutator_suite(a: Field, f: Field, s: float, sigma: float = 1.6,
                     b: Field | None = None, phase=None, tol: float = 1e-12) -> dict:
    """Ratios of para-product/commutator left-hand sides to their bounds.

    Coefficients (``a``, ``b``) are measured in ``L^inf_y H^sigma_x`` and the
    operand ``f`` in ``L^2_y H^{s-1}_x`` (``H^{s+1/2}`` for the phase-twisted
    commutator).  Each entry is ``{"lhs", "rhs", "ratio", "inconsistent"}``.
    When ``phase`` is given, every norm is of the Gevrey-lifted quantity.
    """
    from .spaces import phase_symbol_array

    if b is None:
        b = a
    lift = None if phase is None else np.exp(phase_symbol_array(a.grid.xi, phase))
    na = _linf_y_hs(a, sigma, lift)
    nb = _linf_y_hs(b, sigma, lift)
    ab = _pointwise(a, b)

    out = {}

    def record(name, lhs_field, lhs_s, rhs):
        lhs = _l2y_hs(lhs_field, lhs_s, lift)
        bad = rhs <= tol and lhs > tol
        ratio = 0.0 if lhs <= tol else (np.inf if rhs <= tol else lhs / rhs)
        out[name] = {"lhs": lhs, "rhs": rhs, "ratio": ratio, "inconsistent": bool(bad)}

    record("paraproduct_bound", paraproduct(a, f), s, na * _l2y_hs(f, s, lift))
    record("adjoint_bound", paraproduct_adjoint(a, f), s, na * _l2y_hs(f, s, lift))
    fm1 = _l2y_hs(f, s - 1, lift)
    record("composition", paraproduct(a, paraproduct(b, f)) - paraproduct(ab, f), s, na * nb * fm1)
    comm = bracket_power(paraproduct(a, f), s) - paraproduct(a, bracket_power(f, s))
    record("bracket_commutator", comm, 0.0, na * fm1)
    record("adjoint_difference", paraproduct(a, f) - paraproduct_adjoint(a, f), s, na * fm1)
    ab_ba = paraproduct(a, paraproduct(b, f)) - paraproduct(b, paraproduct(a, f))
    record("paraproduct_commutator", ab_ba, s, na * nb * fm1)
    if phase is not None:
        from .grid import dx

        lifted = lambda h: Field(h.grid, spec=h.spec * lift)
        twisted = lifted(paraproduct(a, dx(f))) - paraproduct(lifted(a), dx(lifted(f)))
        radius = phase.delta - phase.gamma * phase.mu
        # norms on the left are already lifted, so measure them without lift
        lhs = _l2y_hs(twisted, s)
        rhs = radius * na * _l2y_hs(f, s + 0.5, lift)
        bad = rhs <= tol and lhs > tol
        ratio = 0.0 if lhs <= tol else (np.inf if rhs <= tol else lhs / rhs)
        out["phase_commutator"] = {"lhs": lhs, "rhs": rhs, "ratio": ratio, "inconsistent": bool(bad)}
    return out


def _pointwise(a: Field, b: Field) -> Field:
    from .grid import product

    return product(a, b)
