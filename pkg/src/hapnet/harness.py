"""Episode orchestration: slot loop, PPO environment, baselines, sweeps.

Every slot follows the same sequence regardless of the caching method:
the upcoming requests are sampled, the method picks the next placement,
channels are drawn, demands become multicast sessions, the backhaul routing
program and the per-HAP beamforming pipeline are solved, and the weighted
power cost

    PC = P_fso_dc + omega * (P_fso_hap + P_rf)

is charged (reward -PC for the learning agent).  Random streams are split
by purpose (topology / catalog / traffic / channel / policy / beams) so
that two methods evaluated under the same seed face identical requests and
channels.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import beamforming, ppo_agent, routing, traffic
from .channel import FsoLinkState, RfChannelState, sample_fso_links, sample_rf
from .scenario import ScenarioConfig
from .topology import build_topology
from .traffic import CachePlacement, RequestMatrix

METHODS = ("proposed", "B1", "B2", "B3", "B4")
CSV_COLUMNS = ["method", "axis", "value", "seed", "slot", "pc", "p_dc", "p_hap", "p_rf", "feasible"]


def power_cost(p_dc: float, p_hap: float, p_rf: float, omega: float) -> float:
    """Weighted network power cost for one slot."""
    return p_dc + omega * (p_hap + p_rf)


def _rng(*entropy: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(entropy)))


_STREAM_IDS = {"train": 1, "eval": 2}


@dataclass
class SlotResult:
    pc: float
    p_dc: float
    p_hap: float
    p_rf: float
    feasible: bool
    reward: float
    max_residual: float
    routing_status: str
    digest: str
    demand: traffic.DemandProfile | None = None


class Simulator:
    """Holds one episode stream's topology, catalog, and random state.

    `stream` selects an independent request/channel randomness lane
    ("train" or "eval") while keeping the scenario realization (topology,
    Zipf skews, popularity orders) fixed for a given seed.
    """

    def __init__(self, scenario: ScenarioConfig, seed: int, stream: str = "train",
                 routing_mode: str = "multicast", rf_cache: dict | None = None):
        scenario.validate()
        if routing_mode not in ("multicast", "unicast"):
            raise ValueError(f"unknown routing mode {routing_mode}")
        self.scenario = scenario
        self.seed = seed
        self.routing_mode = routing_mode
        self.rf_cache = rf_cache

        self.topology = build_topology(scenario.geometry, _rng(seed, 11))
        self.catalog = traffic.Catalog.create(
            scenario.n_contents, scenario.mu_cac, scenario.mu_acc,
            scenario.geometry.n_haps, _rng(seed, 12), scenario.zipf_skew_range,
        )
        sid = _STREAM_IDS[stream]
        self.traffic_rng = _rng(seed, sid, 21)
        self.channel_rng = _rng(seed, sid, 22)
        self.policy_rng = _rng(seed, sid, 23)
        self.beams_rng = _rng(seed, sid, 24)

        delta = beamforming.sinr_target_for_rate(scenario.mu_acc, scenario.rf.bandwidth_hz)
        self.sinr_targets = {c: delta for c in range(scenario.n_contents)}
        self.noise_power = scenario.rf.noise_power()

        self.z_cur: CachePlacement | None = None
        self.alpha_cur: RequestMatrix | None = None
        self.slot = 0
        self._feasible_costs: list[float] = []

    # -- state plumbing ----------------------------------------------------
    @property
    def n_haps(self) -> int:
        return self.topology.n_haps

    @property
    def n_contents(self) -> int:
        return self.scenario.n_contents

    @property
    def n_sto(self) -> int:
        return self.scenario.n_sto

    def reset(self) -> np.ndarray:
        """Start an episode with empty caches and a fresh request draw."""
        self.z_cur = CachePlacement.empty(self.n_haps, self.n_contents, self.n_sto)
        self.alpha_cur = traffic.sample_requests(self.catalog, self.topology, self.traffic_rng)
        self.slot = 0
        return self.encoded_state()

    def encoded_state(self) -> np.ndarray:
        ind = traffic.request_indicator(self.alpha_cur, self.topology, self.n_contents)
        return ppo_agent.encode_state(self.z_cur, ind)

    def sample_next_requests(self) -> RequestMatrix:
        return traffic.sample_requests(self.catalog, self.topology, self.traffic_rng)

    # -- per-slot solve ----------------------------------------------------
    def _beam_groups(self, alpha: RequestMatrix, rf_state: RfChannelState) -> list[beamforming.BeamGroup]:
        groups = []
        for k in range(self.n_haps):
            users = self.topology.users_of(k)
            if len(users) == 0:
                continue
            for c in range(self.n_contents):
                requesting = users[alpha.alpha[users, c] > 0]
                if len(requesting):
                    groups.append(beamforming.BeamGroup(hap=k, content=c, channels=rf_state.h[requesting]))
        return groups

    def _rf_power(self, alpha: RequestMatrix, rf_state: RfChannelState) -> float:
        if self.rf_cache is not None and self.slot in self.rf_cache:
            return self.rf_cache[self.slot]
        problem = beamforming.BeamformingProblem(
            groups=self._beam_groups(alpha, rf_state),
            sinr_targets=self.sinr_targets,
            noise_power=self.noise_power,
            n_antennas=self.scenario.rf.n_antennas,
            omega=self.scenario.omega,
        )
        beams = beamforming.solve_beamforming(
            problem, self.beams_rng, solver=self.scenario.solver,
            n_candidates=self.scenario.n_beam_candidates,
        )
        if self.rf_cache is not None:
            self.rf_cache[self.slot] = beams.p_rf
        return beams.p_rf

    def step_with_placement(self, z_next: CachePlacement,
                            alpha_next: RequestMatrix | None = None) -> SlotResult:
        """Run one slot with an already-projected next placement.

        Samples the upcoming requests and this slot's channels, solves the
        routing and beamforming subproblems for the current demands, charges
        the weighted power cost, and advances the episode state.
        """
        if self.z_cur is None:
            raise RuntimeError("call reset() before stepping")
        if z_next.z.shape != (self.n_haps, self.n_contents):
            raise ValueError("placement shape mismatch")

        if alpha_next is None:
            alpha_next = self.sample_next_requests()
        fso_state = sample_fso_links(self.topology, self.scenario.fso, self.channel_rng)
        rf_state = sample_rf(self.topology, self.scenario.rf, self.channel_rng)
        digest = self._digest(fso_state, rf_state)

        demand = traffic.build_demand_profile(self.z_cur, z_next, self.alpha_cur, self.catalog, self.topology)
        sessions = traffic.build_sessions(self.z_cur, demand, self.topology, self.catalog)

        feasible, max_residual, status = True, 0.0, "optimal"
        p_dc = p_hap = p_rf = 0.0
        try:
            if sessions:
                problem = routing.RoutingProblem(
                    topology=self.topology, sessions=sessions, g=fso_state.g,
                    fso=self.scenario.fso, omega=self.scenario.omega,
                )
                solve = routing.solve_unicast_routing if self.routing_mode == "unicast" else routing.solve_routing
                solution = solve(problem, solver=self.scenario.solver)
                report = routing.check_feasibility(problem, solution)
                feasible = report.ok
                max_residual = max(report.residuals.values())
                status = solution.status
                p_dc, p_hap = solution.p_fso_dc, solution.p_fso_hap
            p_rf = self._rf_power(self.alpha_cur, rf_state)
        except (routing.RoutingInfeasible, routing.DestinationUnreachable,
                beamforming.BeamformingInfeasible, beamforming.RandomizationFailed) as exc:
            feasible, status = False, f"{type(exc).__name__}: {exc}"

        if feasible:
            pc = power_cost(p_dc, p_hap, p_rf, self.scenario.omega)
            reward = -pc
            self._feasible_costs.append(pc)
        else:
            pc = float("nan")
            median = float(np.median(self._feasible_costs)) if self._feasible_costs else 1.0
            reward = -self.scenario.infeasible_penalty * median

        result = SlotResult(
            pc=pc, p_dc=p_dc, p_hap=p_hap, p_rf=p_rf, feasible=feasible,
            reward=reward, max_residual=max_residual, routing_status=status,
            digest=digest, demand=demand,
        )
        self.z_cur = z_next
        self.alpha_cur = alpha_next
        self.slot += 1
        return result

    def _digest(self, fso_state: FsoLinkState, rf_state: RfChannelState) -> str:
        hasher = hashlib.sha256()
        hasher.update(self.alpha_cur.alpha.tobytes())
        hasher.update(fso_state.h.tobytes())
        hasher.update(rf_state.h.tobytes())
        return hasher.hexdigest()[:16]


def run_slot(state: Simulator, z_next: CachePlacement) -> tuple[float, dict, Simulator]:
    """Advance one slot; returns (PC, component dict, the advanced state)."""
    result = state.step_with_placement(z_next)
    components = {
        "p_dc": result.p_dc, "p_hap": result.p_hap, "p_rf": result.p_rf,
        "feasible": result.feasible, "reward": result.reward,
    }
    return result.pc, components, state


class CachingEnv:
    """reset/step protocol over a Simulator for the PPO trainer."""

    def __init__(self, simulator: Simulator):
        self.sim = simulator

    @property
    def n_haps(self) -> int:
        return self.sim.n_haps

    @property
    def n_contents(self) -> int:
        return self.sim.n_contents

    def reset(self) -> np.ndarray:
        return self.sim.reset()

    def step(self, action: np.ndarray):
        z_next = ppo_agent.proc_act(action, self.sim.n_sto, self.sim.n_haps, self.sim.n_contents)
        result = self.sim.step_with_placement(z_next)
        info = {"pc": result.pc, "feasible": result.feasible, "p_dc": result.p_dc,
                "p_hap": result.p_hap, "p_rf": result.p_rf}
        return self.sim.encoded_state(), result.reward, info


@dataclass
class RunRecord:
    """Per-run artifact: metadata document plus flat per-slot rows."""

    meta: dict
    rows: list[dict] = field(default_factory=list)

    def digest(self) -> str:
        """Hash of the canonical CSV lines; stable across save/load."""
        hasher = hashlib.sha256()
        for row in self.rows:
            line = ",".join(_csv_cell(row[c]) for c in CSV_COLUMNS)
            hasher.update(line.encode())
        hasher.update(self.meta.get("config_hash", "").encode())
        return hasher.hexdigest()[:16]

    def mean_pc(self) -> float:
        values = [r["pc"] for r in self.rows if r["feasible"]]
        return float(np.mean(values)) if values else float("nan")

    def feasibility_rate(self) -> float:
        if not self.rows:
            return 1.0
        return float(np.mean([1.0 if r["feasible"] else 0.0 for r in self.rows]))

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = dict(self.meta)
        meta["digest"] = self.digest()
        (directory / "meta.yaml").write_text(yaml.safe_dump(meta, sort_keys=True))
        lines = [",".join(CSV_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(_csv_cell(row[c]) for c in CSV_COLUMNS))
        (directory / "slots.csv").write_text("\n".join(lines) + "\n")
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "RunRecord":
        directory = Path(directory)
        meta = yaml.safe_load((directory / "meta.yaml").read_text())
        rows = []
        lines = (directory / "slots.csv").read_text().strip().split("\n")
        header = lines[0].split(",")
        for line in lines[1:]:
            cells = line.split(",")
            row = dict(zip(header, cells))
            for key in ("pc", "p_dc", "p_hap", "p_rf", "value"):
                row[key] = float(row[key])
            row["slot"] = int(row["slot"])
            row["seed"] = int(row["seed"])
            row["feasible"] = row["feasible"] in ("1", "True", "true")
            rows.append(row)
        return cls(meta=meta, rows=rows)


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


# -- placement rules -----------------------------------------------------


def top_count_placement(prev: CachePlacement, alpha: RequestMatrix, sim: Simulator) -> CachePlacement:
    """Most-requested contents first, keeping already-cached ones on ties."""
    z = np.zeros_like(prev.z)
    for k in range(sim.n_haps):
        users = sim.topology.users_of(k)
        counts = alpha.alpha[users].sum(axis=0) if len(users) else np.zeros(sim.n_contents)
        order = sorted(
            range(sim.n_contents),
            key=lambda c: (-counts[c], -prev.z[k, c], c),
        )
        kept = 0
        for c in order:
            if kept >= sim.n_sto:
                break
            if counts[c] > 0 or prev.z[k, c]:
                z[k, c] = 1
                kept += 1
    return CachePlacement(z, sim.n_sto)


def random_placement(sim: Simulator) -> CachePlacement:
    """Uniform capacity-feasible placement: n_sto distinct contents per HAP."""
    z = np.zeros((sim.n_haps, sim.n_contents), dtype=np.int8)
    size = min(sim.n_sto, sim.n_contents)
    for k in range(sim.n_haps):
        if size:
            z[k, sim.policy_rng.choice(sim.n_contents, size=size, replace=False)] = 1
    return CachePlacement(z, sim.n_sto)


def greedy_placement(policy: ppo_agent.ActorCritic, sim: Simulator) -> CachePlacement:
    """Deterministic evaluation rule: take every bit with probability > 1/2."""
    import torch

    with torch.no_grad():
        p = policy.action_probs(torch.as_tensor(sim.encoded_state())).numpy()
    return ppo_agent.proc_act((p > 0.5).astype(np.int8), sim.n_sto, sim.n_haps, sim.n_contents)


# -- method runners --------------------------------------------------------


def _base_meta(scenario: ScenarioConfig, method: str, seed: int, axis: str, value) -> dict:
    return {
        "method": method, "seed": seed, "axis": axis, "value": float(value),
        "omega": scenario.omega, "config_hash": scenario.config_hash(),
    }


def _rollout(sim: Simulator, choose_next, n_slots: int, meta: dict) -> RunRecord:
    record = RunRecord(meta=meta)
    sim.reset()
    start = time.perf_counter()
    for t in range(n_slots):
        alpha_next = sim.sample_next_requests()
        z_next = choose_next(sim, alpha_next)
        result = sim.step_with_placement(z_next, alpha_next=alpha_next)
        record.rows.append({
            "method": meta["method"], "axis": meta["axis"], "value": meta["value"],
            "seed": meta["seed"], "slot": t, "pc": result.pc, "p_dc": result.p_dc,
            "p_hap": result.p_hap, "p_rf": result.p_rf, "feasible": result.feasible,
        })
    record.meta["wall_clock_s"] = time.perf_counter() - start
    return record


def train_agent(scenario: ScenarioConfig, seed: int, routing_mode: str = "multicast",
                iters_max: int | None = None) -> ppo_agent.TrainResult:
    """Train the caching agent on the scenario's training stream."""
    sim = Simulator(scenario, seed, stream="train", routing_mode=routing_mode)
    env = CachingEnv(sim)
    config = scenario.ppo if iters_max is None else _with_iters(scenario.ppo, iters_max)
    return ppo_agent.train(env, config, sim.policy_rng)


def _with_iters(config: ppo_agent.PpoConfig, iters_max: int) -> ppo_agent.PpoConfig:
    from dataclasses import replace

    return replace(config, iters_max=iters_max)


def run_baseline(name: str, scenario: ScenarioConfig, seed: int,
                 n_slots: int | None = None, axis: str = "none", value=0.0,
                 rf_cache: dict | None = None, train_iters: int | None = None) -> RunRecord:
    """Evaluate one baseline (B1..B4) over the shared evaluation stream.

    B1 trains its own agent under unicast routing; B2 prefetches the
    upcoming slot's most-requested contents (oracle knowledge of the next
    slot only); B3 redraws a uniform feasible placement each slot; B4 never
    caches.
    """
    if name not in ("B1", "B2", "B3", "B4"):
        raise ValueError(f"unknown baseline {name}")
    mode = "unicast" if name == "B1" else "multicast"
    sim = Simulator(scenario, seed, stream="eval", routing_mode=mode, rf_cache=rf_cache)
    n_slots = n_slots or scenario.eval_slots
    meta = _base_meta(scenario, name, seed, axis, value)

    if name == "B1":
        trained = train_agent(scenario, seed, routing_mode="unicast", iters_max=train_iters)
        meta["learning_curve"] = trained.learning_curve
        choose = lambda s, alpha_next: greedy_placement(trained.policy, s)
    elif name == "B2":
        choose = lambda s, alpha_next: top_count_placement(s.z_cur, alpha_next, s)
    elif name == "B3":
        choose = lambda s, alpha_next: random_placement(s)
    else:
        choose = lambda s, alpha_next: CachePlacement.empty(s.n_haps, s.n_contents, s.n_sto)

    return _rollout(sim, choose, n_slots, meta)


def run_proposed(scenario: ScenarioConfig, seed: int, n_slots: int | None = None,
                 axis: str = "none", value=0.0, rf_cache: dict | None = None,
                 train_iters: int | None = None) -> RunRecord:
    """Train the PPO agent, then evaluate it greedily on the shared eval stream."""
    trained = train_agent(scenario, seed, routing_mode="multicast", iters_max=train_iters)
    sim = Simulator(scenario, seed, stream="eval", routing_mode="multicast", rf_cache=rf_cache)
    meta = _base_meta(scenario, "proposed", seed, axis, value)
    meta["learning_curve"] = trained.learning_curve
    choose = lambda s, alpha_next: greedy_placement(trained.policy, s)
    return _rollout(sim, choose, n_slots or scenario.eval_slots, meta)


def evaluate_method(method: str, scenario: ScenarioConfig, seed: int, **kwargs) -> RunRecord:
    if method == "proposed":
        return run_proposed(scenario, seed, **kwargs)
    return run_baseline(method, scenario, seed, **kwargs)


# -- sweeps ----------------------------------------------------------------

AXIS_KEYS = {
    "contents": "n_contents",
    "users": "geometry.n_users",
    "mu_cac": "mu_cac",
    "mu_acc": "mu_acc",
    "n_sto": "n_sto",
    "b_fso": "fso.bandwidth_hz",
    "b_rf": "rf.bandwidth_hz",
    "visibility": "fso.visibility_km",
    "omega": "omega",
}


def apply_axis(scenario: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    if axis not in AXIS_KEYS:
        raise ValueError(f"unknown sweep axis {axis}; choose from {sorted(AXIS_KEYS)}")
    caster = int if axis in ("contents", "users", "n_sto") else float
    return scenario.with_overrides({AXIS_KEYS[axis]: caster(value)})


def sweep_and_report(scenario: ScenarioConfig, axis: str, values, seeds,
                     outdir: str | Path, methods=METHODS,
                     n_slots: int | None = None, train_iters: int | None = None,
                     make_plots: bool = True) -> list[dict]:
    """Run every (value, seed, method) cell, persist records, emit summaries.

    Cells share request/channel streams within a (value, seed) pair, and
    the RF beamforming power (which does not depend on the caching method)
    is computed once per pair and reused.  A failed cell is recorded with an
    error note and the sweep continues.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    summary: list[dict] = []
    for value in values:
        cell_scenario = apply_axis(scenario, axis, value)
        for seed in seeds:
            rf_cache: dict = {}
            for method in methods:
                cell_dir = outdir / f"{axis}_{value}_seed{seed}_{method}"
                try:
                    record = evaluate_method(
                        method, cell_scenario, seed, n_slots=n_slots,
                        axis=axis, value=value, rf_cache=rf_cache,
                        train_iters=train_iters,
                    )
                    record.save(cell_dir)
                    summary.append({
                        "method": method, "axis": axis, "value": value, "seed": seed,
                        "mean_pc": record.mean_pc(),
                        "mean_p_dc": _component_mean(record, "p_dc"),
                        "mean_p_hap": _component_mean(record, "p_hap"),
                        "mean_p_rf": _component_mean(record, "p_rf"),
                        "feasibility_rate": record.feasibility_rate(),
                        "error": "",
                    })
                except Exception as exc:  # partial-failure policy: keep sweeping
                    summary.append({
                        "method": method, "axis": axis, "value": value, "seed": seed,
                        "mean_pc": float("nan"), "mean_p_dc": float("nan"),
                        "mean_p_hap": float("nan"), "mean_p_rf": float("nan"),
                        "feasibility_rate": 0.0, "error": f"{type(exc).__name__}: {exc}",
                    })
    _write_summary(summary, outdir / "summary.csv")
    if make_plots:
        from . import report

        report.plot_sweep(summary, axis, outdir)
    return summary


def _component_mean(record: RunRecord, key: str) -> float:
    values = [r[key] for r in record.rows if r["feasible"]]
    return float(np.mean(values)) if values else float("nan")


def _write_summary(summary: list[dict], path: Path) -> None:
    if not summary:
        return
    columns = list(summary[0].keys())
    lines = [",".join(columns)]
    for row in summary:
        lines.append(",".join(_csv_cell(row[c]) for c in columns))
    path.write_text("\n".join(lines) + "\n")


def load_summary(path: str | Path) -> list[dict]:
    lines = Path(path).read_text().strip().split("\n")
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        row = dict(zip(header, cells))
        for key in ("mean_pc", "mean_p_dc", "mean_p_hap", "mean_p_rf", "feasibility_rate", "value"):
            if key in row:
                row[key] = float(row[key])
        row["seed"] = int(row["seed"])
        rows.append(row)
    return rows


# -- stored-record verification ---------------------------------------------


def verify_runrecord(directory: str | Path, tol: float = 1e-9) -> dict:
    """Re-check the invariants of a stored run record.

    Verifies the power-cost accounting identity PC = p_dc + omega*(p_hap +
    p_rf) on every feasible slot (relative tolerance `tol`) and that the
    stored digest matches a recomputation over the rows.
    """
    record = RunRecord.load(directory)
    omega = record.meta.get("omega", 1.0)
    worst = 0.0
    for row in record.rows:
        if not row["feasible"]:
            continue
        expected = power_cost(row["p_dc"], row["p_hap"], row["p_rf"], omega)
        rel = abs(row["pc"] - expected) / max(abs(expected), 1e-300)
        worst = max(worst, rel)
    digest_ok = record.digest() == record.meta.get("digest")
    return {
        "accounting_max_rel_error": worst,
        "accounting_ok": worst <= tol,
        "digest_ok": digest_ok,
        "ok": worst <= tol and digest_ok,
        "n_slots": len(record.rows),
        "feasibility_rate": record.feasibility_rate(),
    }
