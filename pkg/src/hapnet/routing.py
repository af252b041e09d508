"""Per-slot backhaul power minimization over network-coded multicast sessions.

The program routes every session's conceptual per-destination flows through
the directed link graph subject to QoS, conservation, source-budget,
flow-coupling, link-rate, half-duplex scheduling, and power-cap constraints,
minimizing the weighted link power

    sum_{DC links} p_l + omega * sum_{HAP links} p_l,

where each link power is the perspective form p = tau * f(gamma / tau),
f(x) = exp(x ln2 / B) / sqrt(g).  The perspective is encoded exactly through
its exponential-cone epigraph

    sqrt(g) * p >= tau * exp((gamma ln2 / B) / tau),

never through a smooth surrogate.  Network coding shows up in the coupling:
the physical flow of a session on a link is the per-destination maximum of
its conceptual flows; the unicast variant replaces the maximum by the sum
(one private copy per destination).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .channel import FsoParams, approx_link_power
from .topology import NetworkTopology
from .traffic import MulticastSession


class RoutingInfeasible(Exception):
    """Demand exceeds what capacity, scheduling, and power caps allow."""


class DestinationUnreachable(Exception):
    """A session destination has no directed path from any of its sources."""


def _default_solver() -> str:
    installed = cp.installed_solvers()
    for name in ("CLARABEL", "SCS"):
        if name in installed:
            return name
    return installed[0]


@dataclass
class RoutingProblem:
    """One slot's backhaul instance: graph, sessions, channel gains, weights."""

    topology: NetworkTopology
    sessions: list[MulticastSession]
    g: np.ndarray
    fso: FsoParams
    omega: float = 1.0
    # Optional extra per-link rate cap on top of the bandwidth/power cap
    # (used e.g. to pose unit-capacity instances).
    rate_caps: np.ndarray | None = None

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)
        if len(self.g) != self.topology.n_links:
            raise ValueError("one gain factor per link required")
        if np.any(self.g <= 0):
            raise ValueError("link gain factors must be positive")
        for s in self.sessions:
            if not s.sources:
                raise ValueError(f"session {s.content} has no source")
            for d in s.destinations:
                if self.topology.is_dc(d):
                    raise ValueError(f"session {s.content} destination {d} is not a HAP")

    def link_weights(self) -> np.ndarray:
        """Power weight per link: 1 for DC feeders, omega for HAP-origin links."""
        return np.array(
            [1.0 if self.topology.is_dc(l.src) else self.omega for l in self.topology.links]
        )

    def capacity_coeff(self) -> np.ndarray:
        """Per-link rate cap per unit of time fraction, from bandwidth and p_max."""
        B = self.fso.bandwidth_hz
        return B / (2.0 * np.log(2)) * np.log1p(self.g * self.fso.p_max_w**2)


@dataclass
class RoutingSolution:
    """Solved flows, schedules, and link powers for one slot."""

    e: list[np.ndarray]          # per session: (L, n_destinations)
    eta_cac: list[np.ndarray]    # per session: (L,)
    eta_acc: list[np.ndarray]    # per session: (L,)
    tau: np.ndarray
    gamma: np.ndarray
    p_tilde: np.ndarray
    objective: float
    p_fso_dc: float
    p_fso_hap: float
    mode: str                    # "multicast" or "unicast"
    status: str = "optimal"

    def link_table(self, topology: NetworkTopology) -> list[dict]:
        rows = []
        for idx, link in enumerate(topology.links):
            rows.append(
                {
                    "link": idx,
                    "src": link.src,
                    "dst": link.dst,
                    "tau": float(self.tau[idx]),
                    "gamma": float(self.gamma[idx]),
                    "p_tilde": float(self.p_tilde[idx]),
                }
            )
        return rows


def _zero_solution(problem: RoutingProblem, mode: str) -> RoutingSolution:
    L = problem.topology.n_links
    return RoutingSolution(
        e=[], eta_cac=[], eta_acc=[],
        tau=np.zeros(L), gamma=np.zeros(L), p_tilde=np.zeros(L),
        objective=0.0, p_fso_dc=0.0, p_fso_hap=0.0, mode=mode,
    )


def _check_reachability(problem: RoutingProblem) -> None:
    topo = problem.topology
    for session in problem.sessions:
        reached = set(session.sources)
        frontier = list(session.sources)
        while frontier:
            node = frontier.pop()
            for idx in topo.out_links[node]:
                dst = topo.links[idx].dst
                if dst not in reached:
                    reached.add(dst)
                    frontier.append(dst)
        for dest in session.destinations:
            if dest not in reached:
                raise DestinationUnreachable(
                    f"content {session.content}: destination {dest} unreachable from sources {session.sources}"
                )


def _solve(problem: RoutingProblem, unicast: bool, solver: str | None, **solver_opts) -> RoutingSolution:
    mode = "unicast" if unicast else "multicast"
    if not problem.sessions:
        return _zero_solution(problem, mode)
    _check_reachability(problem)

    topo = problem.topology
    L = topo.n_links
    scale = max(max(s.mu_cac, s.mu_acc) for s in problem.sessions)

    tau = cp.Variable(L, nonneg=True)
    gamma = cp.Variable(L, nonneg=True)       # total link rate, in units of `scale`
    q = cp.Variable(L, nonneg=True)           # sqrt(g) * p_tilde

    constraints = []
    eta_total = 0
    e_vars, eta_cac_vars, eta_acc_vars = [], [], []
    for session in problem.sessions:
        dests = session.destinations
        n_cac = len(session.dest_cac)
        e = cp.Variable((L, len(dests)), nonneg=True)
        e_vars.append(e)
        eta_cac = cp.Variable(L, nonneg=True) if n_cac else None
        eta_acc = cp.Variable(L, nonneg=True) if len(session.dest_acc) else None
        eta_cac_vars.append(eta_cac)
        eta_acc_vars.append(eta_acc)

        source_out = [idx for n in session.sources for idx in topo.out_links[n]]
        for j, dest in enumerate(dests):
            rate = session.required_rate(dest) / scale
            constraints.append(cp.sum(e[topo.in_links[dest], j]) >= rate)
            if source_out:
                constraints.append(cp.sum(e[source_out, j]) >= rate)
            for n in range(topo.n_haps):
                if n == dest or n in session.sources:
                    continue
                constraints.append(
                    cp.sum(e[topo.in_links[n], j]) == cp.sum(e[topo.out_links[n], j])
                )
        if unicast:
            if n_cac:
                constraints.append(cp.sum(e[:, :n_cac], axis=1) <= eta_cac)
            if eta_acc is not None:
                constraints.append(cp.sum(e[:, n_cac:], axis=1) <= eta_acc)
        else:
            for j in range(len(dests)):
                target = eta_cac if j < n_cac else eta_acc
                constraints.append(e[:, j] <= target)
        if eta_cac is not None:
            eta_total = eta_total + eta_cac
        if eta_acc is not None:
            eta_total = eta_total + eta_acc

    constraints.append(eta_total <= gamma)
    cap = problem.capacity_coeff() / scale
    constraints.append(eta_total <= cp.multiply(cap, tau))
    if problem.rate_caps is not None:
        constraints.append(gamma <= np.asarray(problem.rate_caps, dtype=float) / scale)

    for k in range(topo.n_haps):
        touching = topo.in_links[k] + topo.out_links[k]
        if touching:
            constraints.append(cp.sum(tau[touching]) <= 1)
    for d in topo.dc_nodes:
        if topo.out_links[d]:
            constraints.append(cp.sum(tau[topo.out_links[d]]) <= 1)

    # Exact perspective epigraph: q >= tau * exp((gamma * scale * ln2 / B) / tau).
    rate_factor = scale * np.log(2) / problem.fso.bandwidth_hz
    constraints.append(cp.constraints.ExpCone(rate_factor * gamma, tau, q))
    constraints.append(q <= cp.multiply(problem.fso.p_max_w * np.sqrt(problem.g), tau))

    weights = problem.link_weights()
    coeff = weights / np.sqrt(problem.g)
    objective = cp.Minimize(cp.sum(cp.multiply(coeff / coeff.max(), q)))
    prob = cp.Problem(objective, constraints)

    chosen = solver or _default_solver()
    try:
        prob.solve(solver=chosen, **solver_opts)
    except cp.error.SolverError:
        fallback = "SCS" if chosen != "SCS" else "CLARABEL"
        prob.solve(solver=fallback, eps_abs=1e-9, eps_rel=1e-9)
    if prob.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        raise RoutingInfeasible(f"routing program infeasible (status {prob.status})")
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise RoutingInfeasible(f"solver returned status {prob.status}")

    tau_v = np.clip(np.asarray(tau.value, dtype=float), 0.0, 1.0)
    gamma_v = np.maximum(np.asarray(gamma.value, dtype=float), 0.0) * scale
    # Link power is defined by the perspective of (gamma, tau); recomputing it
    # from the decision variables strips the epigraph variable's solver slack.
    p_tilde = np.atleast_1d(approx_link_power(gamma_v, tau_v, problem.g, problem.fso))
    is_dc_link = np.array([topo.is_dc(l.src) for l in topo.links])
    p_dc = float(p_tilde[is_dc_link].sum())
    p_hap = float(p_tilde[~is_dc_link].sum())

    def _val(var):
        return np.zeros(L) if var is None else np.maximum(np.asarray(var.value, dtype=float), 0.0) * scale

    return RoutingSolution(
        e=[np.maximum(np.asarray(e.value, dtype=float), 0.0) * scale for e in e_vars],
        eta_cac=[_val(v) for v in eta_cac_vars],
        eta_acc=[_val(v) for v in eta_acc_vars],
        tau=tau_v,
        gamma=gamma_v,
        p_tilde=p_tilde,
        objective=p_dc + problem.omega * p_hap,
        p_fso_dc=p_dc,
        p_fso_hap=p_hap,
        mode=mode,
        status=prob.status,
    )


def solve_routing(problem: RoutingProblem, solver: str | None = None, **solver_opts) -> RoutingSolution:
    """Minimize weighted backhaul power with network-coded (max) flow coupling."""
    return _solve(problem, unicast=False, solver=solver, **solver_opts)


def solve_unicast_routing(problem: RoutingProblem, solver: str | None = None, **solver_opts) -> RoutingSolution:
    """Same program with per-destination flow copies (sum coupling) on every link."""
    return _solve(problem, unicast=True, solver=solver, **solver_opts)


@dataclass
class FeasibilityReport:
    """Max normalized violation per constraint family."""

    residuals: dict[str, float]
    tol: float
    ok: bool = field(init=False)

    def __post_init__(self):
        self.ok = all(v <= self.tol for v in self.residuals.values())

    def summary(self) -> str:
        lines = [f"feasibility check (tol {self.tol:g}): {'PASS' if self.ok else 'FAIL'}"]
        for family, value in self.residuals.items():
            flag = "ok" if value <= self.tol else "VIOLATED"
            lines.append(f"  {family:>16}: {value: .3e}  {flag}")
        return "\n".join(lines)


def check_feasibility(problem: RoutingProblem, solution: RoutingSolution, tol: float = 1e-6) -> FeasibilityReport:
    """Independent constraint-residual audit of a routing solution.

    Residuals are evaluated with plain array arithmetic against the original
    problem data; flow families are normalized by the session rate scale,
    power families by their natural magnitudes.  Link rates below 1e-9 of
    the smallest session rate count as zero flow.
    """
    topo = problem.topology
    L = topo.n_links
    if not problem.sessions:
        scale = 1.0
    else:
        scale = max(max(s.mu_cac, s.mu_acc) for s in problem.sessions)

    res = {
        "qos": 0.0,          # destination inflow and source outflow budgets
        "conservation": 0.0,
        "coupling": 0.0,
        "link_total": 0.0,
        "capacity": 0.0,
        "schedule_hap": 0.0,
        "schedule_dc": 0.0,
        "power_cap": 0.0,
        "power_model": 0.0,
    }

    eta_total = np.zeros(L)
    for s_idx, session in enumerate(problem.sessions):
        e = solution.e[s_idx]
        eta_cac = solution.eta_cac[s_idx]
        eta_acc = solution.eta_acc[s_idx]
        n_cac = len(session.dest_cac)
        source_out = [idx for n in session.sources for idx in topo.out_links[n]]
        for j, dest in enumerate(session.destinations):
            rate = session.required_rate(dest)
            inflow = e[topo.in_links[dest], j].sum()
            res["qos"] = max(res["qos"], (rate - inflow) / rate)
            res["qos"] = max(res["qos"], (rate - e[source_out, j].sum()) / rate)
            for n in range(topo.n_haps):
                if n == dest or n in session.sources:
                    continue
                gap = abs(e[topo.in_links[n], j].sum() - e[topo.out_links[n], j].sum())
                res["conservation"] = max(res["conservation"], gap / scale)
            coupled = eta_cac if j < n_cac else eta_acc
            if solution.mode == "unicast":
                continue
            res["coupling"] = max(res["coupling"], float((e[:, j] - coupled).max()) / scale)
        if solution.mode == "unicast":
            if n_cac:
                gap = e[:, :n_cac].sum(axis=1) - eta_cac
                res["coupling"] = max(res["coupling"], float(gap.max()) / scale)
            if len(session.dest_acc):
                gap = e[:, n_cac:].sum(axis=1) - eta_acc
                res["coupling"] = max(res["coupling"], float(gap.max()) / scale)
        eta_total = eta_total + eta_cac + eta_acc

    if problem.sessions:
        res["link_total"] = float((eta_total - solution.gamma).max()) / scale
        cap = problem.capacity_coeff()
        res["capacity"] = float((eta_total - cap * solution.tau).max()) / scale
        if problem.rate_caps is not None:
            over = solution.gamma - np.asarray(problem.rate_caps, dtype=float)
            res["capacity"] = max(res["capacity"], float(over.max()) / scale)

    for k in range(topo.n_haps):
        touching = topo.in_links[k] + topo.out_links[k]
        if touching:
            res["schedule_hap"] = max(res["schedule_hap"], float(solution.tau[touching].sum()) - 1.0)
    for d in topo.dc_nodes:
        if topo.out_links[d]:
            res["schedule_dc"] = max(res["schedule_dc"], float(solution.tau[topo.out_links[d]].sum()) - 1.0)

    res["power_cap"] = float(
        (solution.p_tilde - solution.tau * problem.fso.p_max_w).max() / problem.fso.p_max_w
    ) if L else 0.0

    if problem.sessions and L:
        floor = 1e-9 * min(min(s.mu_cac, s.mu_acc) for s in problem.sessions)
        gamma_eff = np.where(solution.gamma <= floor, 0.0, solution.gamma)
        expected = approx_link_power(gamma_eff, solution.tau, problem.g, problem.fso)
        ref = max(float(np.max(expected)), float(np.max(solution.p_tilde)), 1e-300)
        res["power_model"] = float(np.max(np.abs(solution.p_tilde - expected))) / ref

    return FeasibilityReport(residuals=res, tol=tol)
