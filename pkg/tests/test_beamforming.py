import numpy as np
import pytest

from hapnet.beamforming import (
    BeamformingInfeasible,
    BeamformingProblem,
    BeamGroup,
    BeamVectors,
    RandomizationFailed,
    SdpSolution,
    compute_sinr,
    extract_beams,
    sinr_target_for_rate,
    solve_beamforming,
    solve_sdp,
)


def complex_vec(rng, m):
    return rng.normal(size=m) + 1j * rng.normal(size=m)


def single_user_problem(m=4, delta=2.0, sigma2=0.5, seed=0):
    rng = np.random.default_rng(seed)
    h = complex_vec(rng, m)
    problem = BeamformingProblem(
        groups=[BeamGroup(hap=0, content=0, channels=h[None, :])],
        sinr_targets={0: delta},
        noise_power=sigma2,
        n_antennas=m,
    )
    return problem, h


def random_multigroup_problem(seed, m=4, n_haps=2, delta=1.0, sigma2=0.1):
    rng = np.random.default_rng(seed)
    groups = []
    for k in range(n_haps):
        for c in range(int(rng.integers(1, 4))):
            n_users = int(rng.integers(1, 3))
            groups.append(BeamGroup(hap=k, content=c, channels=np.array([complex_vec(rng, m) for _ in range(n_users)])))
    targets = {c: delta for c in range(5)}
    return BeamformingProblem(groups=groups, sinr_targets=targets, noise_power=sigma2, n_antennas=m)


class TestSdp:
    def test_single_user_matched_filter_power(self):
        problem, h = single_user_problem(delta=2.0, sigma2=0.5)
        sdp = solve_sdp(problem)
        expected = 2.0 * 0.5 / np.linalg.norm(h) ** 2
        assert sdp.relaxed_power == pytest.approx(expected, rel=1e-6)
        # rank-one solution aligned with the channel
        W = sdp.matrices[(0, 0)]
        eigvals = np.linalg.eigvalsh(W)
        assert eigvals[-2] / eigvals[-1] <= 1e-6
        v = np.linalg.eigh(W)[1][:, -1]
        alignment = abs(np.vdot(v, h)) / np.linalg.norm(h)
        assert alignment == pytest.approx(1.0, abs=1e-5)

    def test_no_groups_zero_power(self):
        problem = BeamformingProblem(groups=[], sinr_targets={}, noise_power=0.1, n_antennas=3)
        sdp = solve_sdp(problem)
        assert sdp.relaxed_power == 0.0
        beams = solve_beamforming(problem, np.random.default_rng(0))
        assert beams.p_rf == 0.0

    def test_constraints_active_at_optimum(self):
        problem = random_multigroup_problem(1, n_haps=1)
        sdp = solve_sdp(problem)
        scale = max(np.linalg.norm(g.channels, axis=1).max() ** 2 for g in problem.groups)
        for g in problem.groups:
            delta = problem.sinr_targets[g.content]
            residuals = []
            for h in g.channels:
                H = np.outer(h, h.conj())
                own = np.real(np.trace(sdp.matrices[(g.hap, g.content)] @ H))
                interf = sum(
                    np.real(np.trace(sdp.matrices[(g.hap, o.content)] @ H))
                    for o in problem.groups_at(g.hap) if o.content != g.content
                )
                residuals.append(own / delta - problem.noise_power - interf)
            norm = problem.noise_power
            assert min(residuals) >= -1e-6 * norm
            # at least one user per group pins its constraint
            assert min(residuals) <= 1e-4 * norm

    def test_infeasible_targets_detected(self):
        # two users with identical channels in mutually interfering groups
        # cannot both exceed SINR 1, whatever the power
        rng = np.random.default_rng(2)
        h = complex_vec(rng, 3)
        problem = BeamformingProblem(
            groups=[
                BeamGroup(hap=0, content=0, channels=h[None, :]),
                BeamGroup(hap=0, content=1, channels=h[None, :]),
            ],
            sinr_targets={0: 2.0, 1: 2.0},
            noise_power=0.1,
            n_antennas=3,
        )
        with pytest.raises(BeamformingInfeasible):
            solve_sdp(problem)

    def test_psd_matrices(self):
        problem = random_multigroup_problem(3)
        sdp = solve_sdp(problem)
        for W in sdp.matrices.values():
            assert np.linalg.eigvalsh(W).min() >= -1e-7 * max(np.trace(W).real, 1.0)


class TestExtraction:
    def test_exact_rank_one_trace_identity(self):
        # on an exactly rank-one matrix, |w|^2 reproduces the trace
        rng = np.random.default_rng(3)
        problem, h = single_user_problem(m=4, delta=1.0, sigma2=1.0, seed=3)
        w_true = 1.7 * h / np.linalg.norm(h)
        W = np.outer(w_true, w_true.conj())
        sdp = SdpSolution(matrices={(0, 0): W}, relaxed_power=float(np.trace(W).real))
        beams = extract_beams(sdp, problem, rng, n_candidates=0)
        assert beams.p_rf == pytest.approx(sdp.relaxed_power, rel=1e-9)

    def test_single_user_never_triggers_randomization(self):
        problem, _ = single_user_problem()
        sdp = solve_sdp(problem)
        # n_candidates=0 would make randomization fail, proving it is not used
        beams = extract_beams(sdp, problem, np.random.default_rng(0), n_candidates=0)
        assert beams.p_rf == pytest.approx(sdp.relaxed_power, rel=1e-6)

    @pytest.mark.parametrize("seed", range(10))
    def test_extracted_power_bounded_below_by_relaxation(self, seed):
        problem = random_multigroup_problem(seed)
        sdp = solve_sdp(problem)
        beams = extract_beams(sdp, problem, np.random.default_rng(seed), n_candidates=50)
        assert beams.p_rf >= sdp.relaxed_power * (1 - 1e-6)
        for g in problem.groups:
            delta = problem.sinr_targets[g.content]
            assert np.all(beams.sinr[(g.hap, g.content)] >= delta * (1 - 1e-6))

    def test_randomization_failure_raises(self):
        # identical channels across interfering groups: no candidate scaling
        # can satisfy both users, whatever the draw
        rng = np.random.default_rng(4)
        h = complex_vec(rng, 3)
        problem = BeamformingProblem(
            groups=[
                BeamGroup(hap=0, content=0, channels=h[None, :]),
                BeamGroup(hap=0, content=1, channels=h[None, :]),
            ],
            sinr_targets={0: 5.0, 1: 5.0},
            noise_power=0.1,
            n_antennas=3,
        )
        fake = SdpSolution(
            matrices={(0, 0): np.eye(3, dtype=complex), (0, 1): np.eye(3, dtype=complex)},
            relaxed_power=6.0,
        )
        with pytest.raises(RandomizationFailed):
            extract_beams(fake, problem, rng, n_candidates=20)


class TestSinr:
    def test_single_group_no_interference(self):
        rng = np.random.default_rng(0)
        h = complex_vec(rng, 4)
        w = complex_vec(rng, 4)
        problem = BeamformingProblem(
            groups=[BeamGroup(hap=0, content=0, channels=h[None, :])],
            sinr_targets={0: 1.0}, noise_power=0.25, n_antennas=4,
        )
        sinr = compute_sinr({(0, 0): w}, problem)[(0, 0)][0]
        assert sinr == pytest.approx(abs(np.vdot(w, h)) ** 2 / 0.25, rel=1e-12)

    def test_orthogonal_interferer_contributes_nothing(self):
        h = np.array([1.0, 0.0, 0.0], dtype=complex)
        w_own = np.array([2.0, 0.0, 0.0], dtype=complex)
        w_other = np.array([0.0, 3.0, 0.0], dtype=complex)  # orthogonal to h
        problem = BeamformingProblem(
            groups=[
                BeamGroup(hap=0, content=0, channels=h[None, :]),
                BeamGroup(hap=0, content=1, channels=np.array([[0.0, 1.0, 0.0]], dtype=complex)),
            ],
            sinr_targets={0: 1.0, 1: 1.0}, noise_power=0.5, n_antennas=3,
        )
        sinr = compute_sinr({(0, 0): w_own, (0, 1): w_other}, problem)[(0, 0)][0]
        assert sinr == pytest.approx(4.0 / 0.5, rel=1e-12)

    def test_matches_independent_formula(self):
        # duplicate implementation written directly from the ratio definition
        problem = random_multigroup_problem(7)
        rng = np.random.default_rng(8)
        vectors = {(g.hap, g.content): complex_vec(rng, 4) for g in problem.groups}
        got = compute_sinr(vectors, problem)
        for g in problem.groups:
            for i, h in enumerate(g.channels):
                num = abs(np.conj(vectors[(g.hap, g.content)]) @ h) ** 2
                den = problem.noise_power
                for other in problem.groups:
                    if other.hap == g.hap and other.content != g.content:
                        den += abs(np.conj(vectors[(other.hap, other.content)]) @ h) ** 2
                assert got[(g.hap, g.content)][i] == pytest.approx(num / den, rel=1e-12)

    def test_common_phase_invariance(self):
        problem = random_multigroup_problem(9)
        rng = np.random.default_rng(10)
        vectors = {(g.hap, g.content): complex_vec(rng, 4) for g in problem.groups}
        base = compute_sinr(vectors, problem)
        rotated = BeamformingProblem(
            groups=[BeamGroup(g.hap, g.content, g.channels * np.exp(1j * 0.73)) for g in problem.groups],
            sinr_targets=problem.sinr_targets,
            noise_power=problem.noise_power,
            n_antennas=problem.n_antennas,
        )
        after = compute_sinr(vectors, rotated)
        for key in base:
            assert np.allclose(base[key], after[key], rtol=1e-12)


class TestStructure:
    def test_omega_scales_objective_not_argmin(self):
        problem_a = random_multigroup_problem(11)
        problem_b = BeamformingProblem(
            groups=problem_a.groups, sinr_targets=problem_a.sinr_targets,
            noise_power=problem_a.noise_power, n_antennas=problem_a.n_antennas,
            omega=2.5,
        )
        sdp_a, sdp_b = solve_sdp(problem_a), solve_sdp(problem_b)
        assert sdp_b.relaxed_power == pytest.approx(sdp_a.relaxed_power, rel=1e-8)
        for key in sdp_a.matrices:
            assert np.allclose(sdp_a.matrices[key], sdp_b.matrices[key], atol=1e-8 * sdp_a.relaxed_power)

    def test_adding_a_user_never_cheapens(self):
        rng = np.random.default_rng(12)
        m = 4
        base_channels = np.array([complex_vec(rng, m)])
        extra = np.vstack([base_channels, complex_vec(rng, m)[None, :]])
        other = BeamGroup(hap=0, content=1, channels=complex_vec(rng, m)[None, :])
        small = BeamformingProblem(
            groups=[BeamGroup(0, 0, base_channels), other],
            sinr_targets={0: 1.0, 1: 1.0}, noise_power=0.1, n_antennas=m,
        )
        big = BeamformingProblem(
            groups=[BeamGroup(0, 0, extra), other],
            sinr_targets={0: 1.0, 1: 1.0}, noise_power=0.1, n_antennas=m,
        )
        assert solve_sdp(big).relaxed_power >= solve_sdp(small).relaxed_power * (1 - 1e-6)

    def test_sinr_target_inversion(self):
        assert sinr_target_for_rate(4e6, 10e6) == pytest.approx(2 ** 0.4 - 1, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            BeamformingProblem(groups=[], sinr_targets={}, noise_power=0.0, n_antennas=2)
        with pytest.raises(ValueError):
            BeamGroup(hap=0, content=0, channels=np.zeros((0, 3)))
