"""Brute-force state-vector oracle for the discrete protocol.

Everything the factorized evaluator computes in closed form is redone
here the slow way: enumerate the joint error ensemble, write down each
corrupted two-qudit state, apply both measurement stages and correction
rotations as explicit projections and index shifts, and score the
result against the maximally entangled target.  Exponentially wasteful
and deliberately so; it shares no intermediate formulas with the fast
path beyond the correction dictionaries, which are protocol data.

Conventions: the cyclic shift acts as X|k> = |k+1 mod d>, the phase as
Z|j> = exp(-2 pi i j / d)|j>, and the dual component of |psi> is
psihat[k] = d^{-1/2} sum_j exp(+2 pi i j k / d) psi[j], under which a
phase Z^l on the primal side shifts the dual index by -l.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .noise import DephasingTable, LossTable, NoiseParams, error_ensemble
from .protocol import (
    DistillationReport,
    LossDict,
    OutcomeRecord,
    OutcomeTuple,
    ProtocolParams,
    RotationDict,
    build_tables,
    loss_dict,
    rotation_dict,
)

# guard rails: the oracle is O(d^2 (l_max+1)^2 d^2) per instance
MAX_D = 16
MAX_L = 4


@dataclass(frozen=True)
class QuditState:
    """Pure two-qudit state, amplitudes indexed ``[j_a, j_b]``."""

    d: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        if self.amplitudes.shape != (self.d, self.d):
            raise ValueError("amplitude array must be d x d")
        n = np.linalg.norm(self.amplitudes)
        if abs(n - 1.0) > 1e-12:
            raise ValueError(f"state norm {n!r} is not 1")


def initial_state(d: int, m_i: int, legs: np.ndarray | None = None) -> QuditState:
    """Uniform two-qudit superposition over correlated legs.

    Default legs are ``0, delta_i, 2 delta_i, ...`` giving the m_i-leg
    entangled input; an explicit ``legs`` array overrides them (used by
    the reduced-support comparisons).
    """
    if legs is None:
        if d % m_i:
            raise ValueError("m_i must divide d")
        legs = np.arange(m_i) * (d // m_i)
    legs = np.asarray(legs, dtype=np.int64)
    amps = np.zeros((d, d), dtype=complex)
    amps[legs, legs] = 1.0 / np.sqrt(len(legs))
    return QuditState(d=d, amplitudes=amps)


def apply_pauli(state: QuditState, which_cavity: str, op: tuple[str, int]) -> QuditState:
    """Apply ``X**s`` or ``Z**l`` to one side of the pair.

    ``which_cavity`` is ``"a"`` or ``"b"``; ``op`` is ``("x", s)`` or
    ``("z", l)``.
    """
    axis = {"a": 0, "b": 1}[which_cavity.lower()]
    kind, power = op[0].lower(), int(op[1])
    d = state.d
    if kind == "x":
        amps = np.roll(state.amplitudes, power, axis=axis)
    elif kind == "z":
        phase = np.exp(-2j * np.pi * power * np.arange(d) / d)
        amps = state.amplitudes * (phase[:, None] if axis == 0 else phase[None, :])
    else:
        raise ValueError(f"unknown op {op!r}")
    return QuditState(d=d, amplitudes=amps)


def dual_transform(state: QuditState, which_cavity: str, inverse: bool = False) -> QuditState:
    """Rewrite one side in the dual basis (inverse undoes it)."""
    d = state.d
    sign = -1.0 if inverse else 1.0
    f = np.exp(sign * 2j * np.pi * np.outer(np.arange(d), np.arange(d)) / d) / np.sqrt(d)
    axis = {"a": 0, "b": 1}[which_cavity.lower()]
    if axis == 0:
        amps = f @ state.amplitudes
    else:
        amps = state.amplitudes @ f.T
    return QuditState(d=d, amplitudes=amps)


def stage_one_branch(
    state: QuditState, a1: int, b1: int, u_b: int, params: ProtocolParams
) -> tuple[float, QuditState]:
    """Project onto one stage-1 outcome and apply the shift corrections.

    Returns the branch probability and the normalized post-correction
    state.  The corrections are ``X**-a1`` on A and
    ``X**(-b1 + u_b delta_c)`` on B.
    """
    d, dc = state.d, params.delta_c
    sel_a = (np.arange(d) % dc) == a1
    sel_b = (np.arange(d) % dc) == b1
    amps = state.amplitudes * sel_a[:, None] * sel_b[None, :]
    p = float(np.sum(np.abs(amps) ** 2))
    if p == 0.0:
        raise ValueError(f"outcome ({a1}, {b1}) has zero probability")
    amps = np.roll(amps, (-a1, -b1 + u_b * dc), axis=(0, 1)) / np.sqrt(p)
    return p, QuditState(d=d, amplitudes=amps)


def _dual_target(params: ProtocolParams) -> np.ndarray:
    """Target pair written in the joint dual basis.

    The kept state should be sum_k |dk + a2-corrected ...>; after the
    stage-2 shifts it is pinned at residue zero, where the dual
    representation has weight on ``k_a = delta_f k (mod m_c)`` paired
    with ``k_b = -delta_f k (mod m_c)``, extended periodically.
    """
    d, mc, mf, df = params.d, params.m_c, params.m_f, params.delta_f
    t = np.zeros((d, d), dtype=complex)
    ka = np.arange(d)
    kb = np.arange(d)
    for k in range(mf):
        sel_a = (ka % mc) == (df * k) % mc
        sel_b = (kb % mc) == (-df * k) % mc
        t[np.ix_(sel_a, sel_b)] += 1.0
    t /= np.linalg.norm(t)
    return t


def simulate_protocol(
    params: ProtocolParams,
    noise: NoiseParams,
    l_max: int | None = None,
    legs: np.ndarray | None = None,
    leg_weights: np.ndarray | None = None,
) -> DistillationReport:
    """Run the full protocol by explicit enumeration.

    Emits the same record schema as the factorized evaluator, computed
    from state vectors instead of mass formulas.  Guarded to ``d <= 16``
    and ``l_max <= 4``: beyond that the enumeration is pointless.
    """
    if params.d > MAX_D:
        raise ValueError(f"oracle limited to d <= {MAX_D}")
    deph, loss = build_tables(params, noise, l_max)
    if loss.l_max > MAX_L:
        raise ValueError(
            f"oracle limited to l_max <= {MAX_L}; pass a smaller l_max"
        )
    rot = rotation_dict(params, deph)
    ldict = loss_dict(params, loss)
    return _enumerate(params, deph, loss, rot, ldict, legs, leg_weights)


def _enumerate(
    params: ProtocolParams,
    deph: DephasingTable,
    loss: LossTable,
    rot: RotationDict,
    ldict: LossDict,
    legs: np.ndarray | None,
    leg_weights: np.ndarray | None,
) -> DistillationReport:
    d, di, dc, df = params.d, params.delta_i, params.delta_c, params.delta_f
    mc, mf = params.m_c, params.m_f
    if legs is None:
        legs = np.arange(params.m_i) * di
    legs = np.asarray(legs, dtype=np.int64)
    if leg_weights is None:
        leg_weights = np.full(len(legs), 1.0 / np.sqrt(len(legs)))

    e_mat = np.exp(2j * np.pi * np.outer(np.arange(d), np.arange(d)) / d)
    target = _dual_target(params)
    # targets pre-shifted per stage-2 outcome: overlapping the unshifted
    # branch with a shifted target equals shifting the branch back, and
    # each shifted target already lives inside its stage-2 mask
    tconj = np.empty((df, df, d, d), dtype=complex)
    for a2 in range(df):
        for b2 in range(df):
            shift = (a2, b2 + ldict.v_b(a2, b2) * df)
            tconj[a2, b2] = np.conj(np.roll(target, shift, axis=(0, 1)))
    mask_f = np.stack(
        [((np.arange(d) % df) == x).astype(float) for x in range(df)]
    )

    # loss orders enter only through phases; batch them per shift pair
    n_l = loss.l_max + 1
    la, lb = np.meshgrid(np.arange(n_l), np.arange(n_l), indexing="ij")
    la, lb = la.ravel(), lb.ravel()
    w_loss = (loss.probs[la] * loss.probs[lb]).ravel()

    num = np.zeros((dc, dc, df, df))
    den = np.zeros((dc, dc, df, df))
    for s_a, q_a in zip(deph.support, deph.probs):
        if q_a == 0.0:
            continue
        a_pos = (legs + int(s_a)) % d
        for s_b, q_b in zip(deph.support, deph.probs):
            if q_b == 0.0:
                continue
            b_pos = (legs + int(s_b)) % d
            w_vec = q_a * q_b * w_loss
            amp = leg_weights[None, :] * np.exp(
                2j
                * np.pi
                * (a_pos[None, :] * la[:, None] + b_pos[None, :] * lb[:, None])
                / d
            )
            for a1 in sorted(set(a_pos % dc)):
                sel_a = a_pos % dc == a1
                for b1 in sorted(set(b_pos[sel_a] % dc)):
                    sel = sel_a & (b_pos % dc == b1)
                    # stage-1 corrections as index shifts on the kept legs
                    aa = (a_pos[sel] - a1) % d
                    bb = (b_pos[sel] - b1 + rot.u_b(a1, b1) * dc) % d
                    psihat = (
                        np.einsum("wl,lk,lm->wkm", amp[:, sel], e_mat[aa], e_mat[bb])
                        / d
                    )
                    n2 = np.einsum(
                        "xk,wkm,ym->wxy", mask_f, np.abs(psihat) ** 2, mask_f
                    )
                    ov = np.einsum("xykm,wkm->wxy", tconj, psihat)
                    den[a1, b1] += np.einsum("w,wxy->xy", w_vec, n2)
                    num[a1, b1] += np.einsum("w,wxy->xy", w_vec, np.abs(ov) ** 2)

    records = []
    kept_mass = 0.0
    kept_weighted = 0.0
    for a1 in range(dc):
        for b1 in range(dc):
            for a2 in range(df):
                for b2 in range(df):
                    p = float(den[a1, b1, a2, b2])
                    f = float(num[a1, b1, a2, b2] / p) if p > 0.0 else 0.0
                    kept = p > 0.0 and f > params.f_cut
                    if kept:
                        kept_mass += p
                        kept_weighted += f * p
                    records.append(
                        OutcomeRecord(OutcomeTuple(a1, b1, a2, b2), f, p, kept)
                    )
    total = float(den.sum())
    if kept_mass > 0.0:
        f_avg = kept_weighted / kept_mass
        p_abort = max(total - kept_mass, 0.0)
    else:
        f_avg, p_abort = None, total
    return DistillationReport(
        params=params,
        records=tuple(records),
        f_avg=f_avg,
        p_abort=p_abort,
        diagnostics={"l_max": loss.l_max, "loss_tail_mass": loss.tail_mass},
    )


def low_entanglement_check(gamma_phi: float) -> tuple[float, float]:
    """Average fidelity of the four-level instance vs its two-leg cousin.

    Both runs use the same parameters, dictionaries and dephasing table
    (no loss, no abort threshold); only the input support differs: four
    legs versus the two legs {0, 2}.  With keep-everything averaging the
    two agree exactly, which pins down how much of the protocol's power
    survives with minimal input entanglement.
    """
    params = ProtocolParams(4, 4, 2, 2, f_cut=0.0)
    noise = NoiseParams(gamma_l=0.0, gamma_phi=gamma_phi, n_bar=16.0)
    rep_full = simulate_protocol(params, noise, l_max=0)
    rep_two = simulate_protocol(
        params, noise, l_max=0, legs=np.array([0, 2]),
        leg_weights=np.full(2, 1.0 / np.sqrt(2.0)),
    )
    return float(rep_full.f_avg), float(rep_two.f_avg)
