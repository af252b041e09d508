"""Multigroup multicast beamforming per HAP: SDP relaxation and extraction.

Each HAP serves per-content user groups through beamforming vectors on its
M-antenna array.  Power minimization under per-user SINR targets is NP-hard
in the vectors, so it is lifted to Hermitian PSD matrices W = w w^H, the
rank-one constraint is dropped, and the resulting SDP is solved per HAP
(the per-HAP problems share no variables or constraints).  Rank-one
solutions yield vectors by eigen-decomposition; otherwise Gaussian
randomization draws candidate vectors from the relaxed covariances and
rescales each candidate set to restore every SINR constraint, keeping the
cheapest feasible set.
"""

from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp
import numpy as np


class BeamformingInfeasible(Exception):
    """SINR targets cannot be met at some HAP."""


class RandomizationFailed(Exception):
    """No Gaussian candidate could be rescaled to feasibility."""


RANK_ONE_TOL = 1e-6


@dataclass
class BeamGroup:
    """Users of one HAP requesting one content, with their channel vectors."""

    hap: int
    content: int
    channels: np.ndarray  # (n_users, M) complex

    def __post_init__(self):
        self.channels = np.atleast_2d(np.asarray(self.channels, dtype=complex))
        if self.channels.shape[0] == 0:
            raise ValueError("empty beam group")


@dataclass
class BeamformingProblem:
    """All multicast groups of one slot plus targets and noise."""

    groups: list[BeamGroup]
    sinr_targets: dict[int, float]     # content -> target SINR
    noise_power: float
    n_antennas: int
    omega: float = 1.0

    def __post_init__(self):
        if self.noise_power <= 0:
            raise ValueError("noise power must be positive")
        for g in self.groups:
            if g.channels.shape[1] != self.n_antennas:
                raise ValueError("channel vector length must equal the antenna count")
            if self.sinr_targets.get(g.content, 0.0) <= 0:
                raise ValueError(f"missing or non-positive SINR target for content {g.content}")

    def haps(self) -> list[int]:
        return sorted({g.hap for g in self.groups})

    def groups_at(self, hap: int) -> list[BeamGroup]:
        return [g for g in self.groups if g.hap == hap]


@dataclass
class SdpSolution:
    """Relaxed PSD matrices per (HAP, content) and the total relaxed power."""

    matrices: dict[tuple[int, int], np.ndarray]
    relaxed_power: float


@dataclass
class BeamVectors:
    """Extracted beamforming vectors with achieved SINRs."""

    vectors: dict[tuple[int, int], np.ndarray]
    sinr: dict[tuple[int, int], np.ndarray]
    p_rf: float


def sinr_target_for_rate(rate: float, bandwidth_hz: float) -> float:
    """Invert rate = B log2(1 + delta) for the target SINR delta."""
    return 2.0 ** (rate / bandwidth_hz) - 1.0


def _channel_scale(problem: BeamformingProblem) -> float:
    norms = [np.linalg.norm(g.channels, axis=1).max() ** 2 for g in problem.groups]
    return max(norms) if norms else 1.0


def solve_sdp(problem: BeamformingProblem, solver: str | None = None) -> SdpSolution:
    """Solve the rank-relaxed power minimization independently per HAP.

    minimize omega * sum_c tr(W_c)  subject to, for every user i of group c,
    tr(W_c H_i) / delta_c >= sigma^2 + sum_{l != c} tr(W_l H_i),  W_c PSD.
    Channels are pre-scaled to O(1) magnitudes for solver conditioning; the
    returned matrices are in true power units.
    """
    if not problem.groups:
        return SdpSolution(matrices={}, relaxed_power=0.0)
    chosen = solver or ("CLARABEL" if "CLARABEL" in cp.installed_solvers() else "SCS")
    scale = _channel_scale(problem)
    sigma2 = problem.noise_power / scale

    matrices: dict[tuple[int, int], np.ndarray] = {}
    total = 0.0
    for hap in problem.haps():
        groups = problem.groups_at(hap)
        W = {g.content: cp.Variable((problem.n_antennas, problem.n_antennas), hermitian=True) for g in groups}
        constraints = [w >> 0 for w in W.values()]
        for g in groups:
            delta = problem.sinr_targets[g.content]
            for h in g.channels:
                H = np.outer(h, h.conj()) / scale
                signal = cp.real(cp.trace(W[g.content] @ H))
                interference = sum(
                    cp.real(cp.trace(W[other.content] @ H))
                    for other in groups
                    if other.content != g.content
                )
                constraints.append(signal / delta >= sigma2 + interference)
        # omega multiplies the whole objective, so it cannot move the argmin;
        # the solver sees the unweighted power for cleaner conditioning.
        objective = cp.Minimize(sum(cp.real(cp.trace(w)) for w in W.values()))
        prob = cp.Problem(objective, constraints)
        try:
            prob.solve(solver=chosen)
        except cp.error.SolverError:
            prob.solve(solver="SCS", eps_abs=1e-9, eps_rel=1e-9)
        if prob.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE) or W[groups[0].content].value is None:
            raise BeamformingInfeasible(f"SINR targets unattainable at HAP {hap} (status {prob.status})")
        for g in groups:
            w_val = np.asarray(W[g.content].value)
            w_val = (w_val + w_val.conj().T) / 2.0
            matrices[(hap, g.content)] = w_val
            total += float(np.real(np.trace(w_val)))
    return SdpSolution(matrices=matrices, relaxed_power=total)


def compute_sinr(
    vectors: dict[tuple[int, int], np.ndarray],
    problem: BeamformingProblem,
) -> dict[tuple[int, int], np.ndarray]:
    """Achieved SINR per user: |w_c^H h|^2 / (sum_{c' != c} |w_c'^H h|^2 + sigma^2)."""
    out: dict[tuple[int, int], np.ndarray] = {}
    for g in problem.groups:
        peers = problem.groups_at(g.hap)
        w_own = vectors[(g.hap, g.content)]
        sinrs = np.zeros(g.channels.shape[0])
        for i, h in enumerate(g.channels):
            signal = abs(np.vdot(w_own, h)) ** 2
            interference = sum(
                abs(np.vdot(vectors[(g.hap, other.content)], h)) ** 2
                for other in peers
                if other.content != g.content
            )
            sinrs[i] = signal / (interference + problem.noise_power)
        out[(g.hap, g.content)] = sinrs
    return out


def _principal_component(W: np.ndarray) -> tuple[np.ndarray, float]:
    eigvals, eigvecs = np.linalg.eigh(W)
    lam = max(float(eigvals[-1]), 0.0)
    ratio = float(eigvals[-2] / eigvals[-1]) if len(eigvals) > 1 and eigvals[-1] > 0 else 0.0
    return np.sqrt(lam) * eigvecs[:, -1], ratio


def _rescale_candidate(
    vectors: dict[tuple[int, int], np.ndarray],
    problem: BeamformingProblem,
    hap: int,
) -> float | None:
    """Common power factor putting every SINR at or above its target.

    With all vectors of one HAP scaled by sqrt(beta), a user's constraint
    becomes beta * (S - delta * I) >= delta * sigma^2, so the minimal common
    factor is the max over users of delta sigma^2 / (S - delta I); users with
    S - delta I <= 0 are interference-limited and unfixable by scaling.
    """
    beta = 0.0
    for g in problem.groups_at(hap):
        delta = problem.sinr_targets[g.content]
        w_own = vectors[(hap, g.content)]
        for h in g.channels:
            signal = abs(np.vdot(w_own, h)) ** 2
            interference = sum(
                abs(np.vdot(vectors[(hap, other.content)], h)) ** 2
                for other in problem.groups_at(hap)
                if other.content != g.content
            )
            margin = signal - delta * interference
            if margin <= 0:
                return None
            beta = max(beta, delta * problem.noise_power / margin)
    return beta


def extract_beams(
    sdp: SdpSolution,
    problem: BeamformingProblem,
    rng: np.random.Generator,
    n_candidates: int = 100,
) -> BeamVectors:
    """Turn relaxed covariances into beamforming vectors.

    HAPs whose matrices are all (numerically) rank one use the scaled
    principal eigenvector directly.  Otherwise candidates are drawn per group
    from CN(0, W), each candidate set is rescaled by the minimal common
    power factor restoring feasibility, and the cheapest feasible set wins.
    """
    vectors: dict[tuple[int, int], np.ndarray] = {}
    for hap in problem.haps():
        groups = problem.groups_at(hap)
        principal = {}
        rank_one = True
        for g in groups:
            w, ratio = _principal_component(sdp.matrices[(hap, g.content)])
            principal[(hap, g.content)] = w
            rank_one = rank_one and ratio <= RANK_ONE_TOL
        if rank_one:
            vectors.update(principal)
            continue

        factors = {}
        for g in groups:
            W = sdp.matrices[(hap, g.content)]
            eigvals, eigvecs = np.linalg.eigh(W)
            factors[g.content] = eigvecs @ np.diag(np.sqrt(np.maximum(eigvals, 0.0)))

        best_power, best = np.inf, None
        candidate_sets = [principal]
        for _ in range(n_candidates):
            cand = {}
            for g in groups:
                M = problem.n_antennas
                noise = (rng.normal(size=M) + 1j * rng.normal(size=M)) / np.sqrt(2.0)
                cand[(hap, g.content)] = factors[g.content] @ noise
            candidate_sets.append(cand)
        for cand in candidate_sets:
            beta = _rescale_candidate(cand, problem, hap)
            if beta is None:
                continue
            power = beta * sum(float(np.linalg.norm(v) ** 2) for v in cand.values())
            if power < best_power:
                best_power = power
                best = {key: np.sqrt(beta) * v for key, v in cand.items()}
        if best is None:
            raise RandomizationFailed(f"no feasible candidate at HAP {hap} after {n_candidates} draws")
        vectors.update(best)

    sinr = compute_sinr(vectors, problem)
    p_rf = sum(float(np.linalg.norm(v) ** 2) for v in vectors.values())
    return BeamVectors(vectors=vectors, sinr=sinr, p_rf=p_rf)


def solve_beamforming(
    problem: BeamformingProblem,
    rng: np.random.Generator,
    solver: str | None = None,
    n_candidates: int = 100,
) -> BeamVectors:
    """Full pipeline: relax, solve, extract."""
    if not problem.groups:
        return BeamVectors(vectors={}, sinr={}, p_rf=0.0)
    sdp = solve_sdp(problem, solver=solver)
    return extract_beams(sdp, problem, rng, n_candidates=n_candidates)
