"""Scenario construction and the two-step coexistence methodology.

Step 1 benchmarks two coexisting Wi-Fi operators in the 3GPP indoor layout;
step 2 replaces operator 2 with LAA under identical topology, traffic and
seeds, and the non-replaced operator's metrics are compared across steps.
Replications are independent simulation instances whose results merge into
one CSV report plus a JSON summary.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

from . import metrics as metrics_mod
from .laa_mac import LaaConfig, LaaEnb
from .medium import (ChannelModel, Medium, NodeKind, NodePosition, RateModel)
from .metrics import FileRecord
from .sim_core import MS, RngStream, Simulator, sec
from .traffic import (FileJob, FtpFlowConfig, LOAD_BANDS, LoadClass,
                      VoipFlowConfig, VoipPacket, buffer_occupancy,
                      classify_load, generate_ftp_arrivals,
                      generate_voip_arrivals)
from .wifi_mac import DcfParams, WifiDevice

SCHEMA_VERSION = 1

CSV_COLUMNS = [
    "replication", "step", "operator", "technology", "load_class",
    "mean_occupancy", "upt_mean_mbps", "upt_p5_mbps", "upt_p50_mbps",
    "upt_p95_mbps", "voip_outage", "channel_occupancy_pct",
    "files_completed", "files_dropped",
]


# -- configuration -------------------------------------------------------------


@dataclass
class BuildingConfig:
    length_m: float = 120.0
    width_m: float = 50.0


@dataclass
class TopologyConfig:
    nodes_per_operator: int = 4
    clients_per_operator: int = 10
    op2_offset_x_band_m: float = 15.0
    op2_offset_y_band_m: float = 10.0


@dataclass
class WifiPowerConfig:
    ap_tx_power_dbm: float = 23.0
    sta_tx_power_dbm: float = 18.0


@dataclass
class VoipTrafficConfig:
    packet_interval_ms: int = 20
    payload_bytes: int = 100
    delay_budget_ms: int = 50
    users_per_operator: int = 4


@dataclass
class TrafficConfig:
    profile: str = "ftp_dl"  # or "mixed_ftp_voip_dl_ul"
    file_size_bytes: int = 500_000
    # Either one rate or a {low, medium, high} table calibrated in step 1.
    ftp_arrival_rate_per_s: object = 1.0
    voip: VoipTrafficConfig = field(default_factory=VoipTrafficConfig)

    def rate_for(self, load: Optional[str]) -> float:
        if isinstance(self.ftp_arrival_rate_per_s, dict):
            if load is None:
                raise ValueError("config carries a per-load rate table; pass a load class")
            try:
                return float(self.ftp_arrival_rate_per_s[load])
            except KeyError:
                raise ValueError(f"no FTP arrival rate calibrated for load {load!r}")
        return float(self.ftp_arrival_rate_per_s)


@dataclass
class MetricsConfig:
    rssi_agg_ms: int = 1
    occupancy_threshold_dbm: float = -62.0


@dataclass
class ScenarioConfig:
    schema_version: int = SCHEMA_VERSION
    master_seed: int = 1
    replications: int = 20
    duration_s: float = 10.0
    building: BuildingConfig = field(default_factory=BuildingConfig)
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    channel: ChannelModel = field(default_factory=ChannelModel)
    rates: RateModel = field(default_factory=RateModel)
    wifi: DcfParams = field(default_factory=DcfParams)
    wifi_power: WifiPowerConfig = field(default_factory=WifiPowerConfig)
    laa: LaaConfig = field(default_factory=LaaConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.topology.nodes_per_operator < 1:
            raise ValueError("nodes_per_operator must be >= 1")
        min_len = self.topology.nodes_per_operator * 2.0
        if self.building.length_m < min_len or self.building.width_m <= 0:
            raise ValueError("building too small for the configured node rows")
        if self.traffic.profile not in ("ftp_dl", "mixed_ftp_voip_dl_ul"):
            raise ValueError(f"unknown traffic profile {self.traffic.profile!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        def build(section, ctor):
            payload = data.get(section)
            if payload is None:
                return ctor()
            if not isinstance(payload, dict):
                raise ValueError(f"config section {section!r} must be an object")
            try:
                return ctor(**payload)
            except TypeError as exc:
                raise ValueError(f"config section {section!r}: {exc}") from None

        known = {"schema_version", "master_seed", "replications", "duration_s",
                 "building", "topology", "channel", "rates", "wifi",
                 "wifi_power", "laa", "traffic", "metrics"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        traffic_data = dict(data.get("traffic", {}))
        voip = VoipTrafficConfig(**traffic_data.pop("voip", {}))
        cfg = cls(
            schema_version=data.get("schema_version", SCHEMA_VERSION),
            master_seed=data.get("master_seed", 1),
            replications=data.get("replications", 20),
            duration_s=data.get("duration_s", 10.0),
            building=build("building", BuildingConfig),
            topology=build("topology", TopologyConfig),
            channel=build("channel", ChannelModel),
            rates=build("rates", RateModel),
            wifi=build("wifi", DcfParams),
            wifi_power=build("wifi_power", WifiPowerConfig),
            laa=build("laa", LaaConfig),
            traffic=TrafficConfig(voip=voip, **traffic_data),
            metrics=build("metrics", MetricsConfig),
        )
        cfg.validate()
        return cfg

    @classmethod
    def from_json_file(cls, path: str) -> "ScenarioConfig":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


# -- topology -------------------------------------------------------------------


@dataclass(frozen=True)
class Placement:
    node_id: str
    operator_id: int
    role: str  # "infra" | "client"
    x: float
    y: float


@dataclass
class Topology:
    placements: list[Placement]
    serving: dict[str, str]  # client node_id -> infra node_id
    shadowing: dict[tuple[str, str], float]

    def infra(self, operator_id: int) -> list[Placement]:
        return [p for p in self.placements
                if p.operator_id == operator_id and p.role == "infra"]

    def clients(self, operator_id: int) -> list[Placement]:
        return [p for p in self.placements
                if p.operator_id == operator_id and p.role == "client"]


def build_indoor_topology(cfg: ScenarioConfig, stream: RngStream) -> Topology:
    """Drop both operators into the single-story building.

    Each operator places `nodes_per_operator` equally spaced nodes along the
    building's longer centerline; operator 2's row is shifted by a random
    per-replication offset so the closest inter-operator distance is random.
    Clients drop uniformly and attach to their own operator's strongest node.
    """
    length, width = cfg.building.length_m, cfg.building.width_m
    n = cfg.topology.nodes_per_operator
    placements: list[Placement] = []
    xs = [length * (2 * i + 1) / (2 * n) for i in range(n)]
    for i, x in enumerate(xs):
        placements.append(Placement(f"op1.n{i}", 1, "infra", x, width / 2))
    dx = stream.uniform(-cfg.topology.op2_offset_x_band_m,
                        cfg.topology.op2_offset_x_band_m)
    dy = stream.uniform(-cfg.topology.op2_offset_y_band_m,
                        cfg.topology.op2_offset_y_band_m)
    for i, x in enumerate(xs):
        placements.append(Placement(
            f"op2.n{i}", 2, "infra",
            min(max(x + dx, 0.0), length), min(max(width / 2 + dy, 0.0), width)))
    for op in (1, 2):
        for c in range(cfg.topology.clients_per_operator):
            placements.append(Placement(
                f"op{op}.c{c}", op, "client",
                stream.uniform(0.0, length), stream.uniform(0.0, width)))

    ids = sorted(p.node_id for p in placements)
    shadowing: dict[tuple[str, str], float] = {}
    sigma = cfg.channel.shadowing_sigma_db
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            shadowing[(a, b)] = stream.gauss(0.0, sigma) if sigma > 0 else 0.0

    by_id = {p.node_id: p for p in placements}

    def loss(a: Placement, b: Placement) -> float:
        d = max(math.hypot(a.x - b.x, a.y - b.y), cfg.channel.min_distance_m)
        key = (a.node_id, b.node_id) if a.node_id <= b.node_id else (b.node_id, a.node_id)
        return (cfg.channel.reference_loss_db
                + 10.0 * cfg.channel.pathloss_exponent * math.log10(d)
                + shadowing[key])

    serving = {}
    for p in placements:
        if p.role != "client":
            continue
        own = [q for q in placements if q.operator_id == p.operator_id and q.role == "infra"]
        serving[p.node_id] = min(own, key=lambda q: loss(p, q)).node_id
    return Topology(placements, serving, shadowing)


# -- per-replication traffic ------------------------------------------------------


@dataclass
class RepTraffic:
    """All arrival instants for one replication, shared verbatim by both steps."""

    ftp_dl: dict[str, list[int]]   # client node_id -> arrival times
    voip_dl: dict[str, list[int]]
    voip_ul: dict[str, list[int]]


def generate_rep_traffic(cfg: ScenarioConfig, topo: Topology, rep_seed: int,
                         ftp_rate_per_s: float) -> RepTraffic:
    horizon = sec(cfg.duration_s)
    ftp_cfg = FtpFlowConfig(ftp_rate_per_s, cfg.traffic.file_size_bytes)
    voip_cfg = VoipFlowConfig(cfg.traffic.voip.packet_interval_ms,
                              cfg.traffic.voip.payload_bytes,
                              cfg.traffic.voip.delay_budget_ms)
    mixed = cfg.traffic.profile == "mixed_ftp_voip_dl_ul"
    n_voip = cfg.traffic.voip.users_per_operator if mixed else 0
    ftp_dl, voip_dl, voip_ul = {}, {}, {}
    for op in (1, 2):
        for idx, client in enumerate(topo.clients(op)):
            cid = client.node_id
            if idx < n_voip:
                voip_dl[cid] = generate_voip_arrivals(
                    voip_cfg, RngStream(rep_seed, f"traffic.voip.dl.{cid}"), horizon)
                voip_ul[cid] = generate_voip_arrivals(
                    voip_cfg, RngStream(rep_seed, f"traffic.voip.ul.{cid}"), horizon)
            else:
                ftp_dl[cid] = generate_ftp_arrivals(
                    ftp_cfg, RngStream(rep_seed, f"traffic.ftp.{cid}"), horizon)
    return RepTraffic(ftp_dl, voip_dl, voip_ul)


# -- recording ---------------------------------------------------------------------


class RunRecorder:
    """Per-operator delivery records collected as one replication step runs."""

    def __init__(self):
        self.files_completed: dict[int, list[FileRecord]] = {1: [], 2: []}
        self.files_dropped: dict[int, int] = {1: 0, 2: 0}
        self.voip_delays: dict[int, dict[str, list[Optional[int]]]] = {1: {}, 2: {}}

    def file_completed(self, operator_id: int, record: FileRecord) -> None:
        self.files_completed[operator_id].append(record)

    def file_dropped(self, operator_id: int) -> None:
        self.files_dropped[operator_id] += 1

    def voip_delivery(self, operator_id: int, user_id: str,
                      delay_ns: Optional[int]) -> None:
        self.voip_delays[operator_id].setdefault(user_id, []).append(delay_ns)


@dataclass
class MetricsRow:
    replication: int
    step: int
    operator: int
    technology: str
    load_class: str
    mean_occupancy: float
    upt_mean_mbps: float
    upt_p5_mbps: float
    upt_p50_mbps: float
    upt_p95_mbps: float
    voip_outage: float
    channel_occupancy_pct: float
    files_completed: int
    files_dropped: int


@dataclass
class StepArtifacts:
    """In-process handles for audits; not carried across worker processes."""

    sim: Simulator
    medium: Medium
    wifi_devices: dict[str, WifiDevice]
    enbs: dict[str, LaaEnb]
    recorder: RunRecorder
    occupancy_by_operator: dict[int, float]


STEP_TECH = {1: {1: "wifi", 2: "wifi"}, 2: {1: "wifi", 2: "laa"}}

_INFRA_KIND = {"wifi": NodeKind.WIFI_AP, "laa": NodeKind.LAA_ENB}
_CLIENT_KIND = {"wifi": NodeKind.WIFI_STA, "laa": NodeKind.LAA_UE}


def derive_rep_seed(master_seed: int, replication: int) -> int:
    digest = hashlib.sha256(f"{master_seed}.rep{replication}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def run_replication_step(cfg: ScenarioConfig, topo: Topology, traffic: RepTraffic,
                         rep_seed: int, step: int,
                         trace: bool = False) -> StepArtifacts:
    """Simulate one step of one replication and leave artifacts inspectable."""
    horizon = sec(cfg.duration_s)
    sim = Simulator(rep_seed, trace=trace)
    medium = Medium(cfg.channel, cfg.rates, shadowing_db=dict(topo.shadowing))
    tech = STEP_TECH[step]

    positions: dict[str, NodePosition] = {}
    for p in topo.placements:
        kind = (_INFRA_KIND if p.role == "infra" else _CLIENT_KIND)[tech[p.operator_id]]
        positions[p.node_id] = medium.add_node(
            NodePosition(p.node_id, p.operator_id, kind, p.x, p.y))

    recorder = RunRecorder()
    wifi_devices: dict[str, WifiDevice] = {}
    enbs: dict[str, LaaEnb] = {}
    for op in (1, 2):
        if tech[op] == "wifi":
            for p in topo.infra(op):
                wifi_devices[p.node_id] = WifiDevice(
                    sim, medium, positions[p.node_id], cfg.wifi,
                    cfg.wifi_power.ap_tx_power_dbm, wifi_devices, recorder)
            for p in topo.clients(op):
                wifi_devices[p.node_id] = WifiDevice(
                    sim, medium, positions[p.node_id], cfg.wifi,
                    cfg.wifi_power.sta_tx_power_dbm, wifi_devices, recorder)
        else:
            for p in topo.infra(op):
                ues = {c.node_id: positions[c.node_id] for c in topo.clients(op)}
                enbs[p.node_id] = LaaEnb(sim, medium, positions[p.node_id],
                                         cfg.laa, ues, recorder)

    def schedule_dl(cid: str, arrivals: list[int], make_item) -> None:
        serving = topo.serving[cid]
        op = positions[cid].operator_id
        server = wifi_devices.get(serving) or enbs.get(serving)
        is_file = make_item == "file"
        for k, t in enumerate(arrivals):
            if is_file:
                job = FileJob(f"ftp.{cid}.{k}", op, serving, cid,
                              cfg.traffic.file_size_bytes, t)
                sim.schedule(t, serving, "ftp_arrival",
                             lambda j=job, s=server: s.enqueue_file(j))
            else:
                pkt = VoipPacket(f"voip.dl.{cid}.{k}", op, cid, serving, cid,
                                 cfg.traffic.voip.payload_bytes, t)
                sim.schedule(t, serving, "voip_arrival",
                             lambda q=pkt, s=server: s.enqueue_voip(q))

    for cid, arrivals in traffic.ftp_dl.items():
        schedule_dl(cid, arrivals, "file")
    for cid, arrivals in traffic.voip_dl.items():
        schedule_dl(cid, arrivals, "voip")
    for cid, arrivals in traffic.voip_ul.items():
        op = positions[cid].operator_id
        if tech[op] != "wifi":
            continue  # LAA is DL-only on the unlicensed carrier
        sta = wifi_devices[cid]
        serving = topo.serving[cid]
        for k, t in enumerate(arrivals):
            pkt = VoipPacket(f"voip.ul.{cid}.{k}", op, cid, cid, serving,
                             cfg.traffic.voip.payload_bytes, t)
            sim.schedule(t, cid, "voip_arrival",
                         lambda q=pkt, s=sta: s.enqueue_voip(q))

    sim.run_until(horizon)
    for dev in wifi_devices.values():
        dev.finalize(horizon)
    for enb in enbs.values():
        enb.finalize(horizon)

    occupancy = {}
    for op in (1, 2):
        infra_ids = [p.node_id for p in topo.infra(op)]
        buffers = [(wifi_devices.get(i) or enbs.get(i)).buffer for i in infra_ids]
        occupancy[op] = sum(buffer_occupancy(b, horizon) for b in buffers) / len(buffers)
    return StepArtifacts(sim, medium, wifi_devices, enbs, recorder, occupancy)


def _channel_occupancy_pct(cfg: ScenarioConfig, art: StepArtifacts,
                           topo: Topology, operator_id: int) -> float:
    horizon = sec(cfg.duration_s)
    values = []
    for p in topo.clients(operator_id):
        pos = art.medium.nodes[p.node_id]
        edges, levels = art.medium.energy_timeline_mw(pos, 0, horizon)
        samples = metrics_mod.l1_rssi_samples_dbm(edges, levels, horizon)
        values.append(metrics_mod.channel_occupancy(
            samples, cfg.metrics.occupancy_threshold_dbm))
    return sum(values) / len(values)


def build_step_rows(cfg: ScenarioConfig, topo: Topology, art: StepArtifacts,
                    replication: int, step: int) -> list[MetricsRow]:
    rows = []
    budget_ns = cfg.traffic.voip.delay_budget_ms * MS
    for op in (1, 2):
        completed = art.recorder.files_completed[op]
        if completed:
            summary = metrics_mod.upt_summary(completed)
        else:
            summary = {"mean": float("nan"), "p5": float("nan"),
                       "p50": float("nan"), "p95": float("nan")}
        delays = art.recorder.voip_delays[op]
        outage = (metrics_mod.voip_outage(delays, budget_ns)
                  if delays else float("nan"))
        rows.append(MetricsRow(
            replication=replication, step=step, operator=op,
            technology=STEP_TECH[step][op], load_class="",
            mean_occupancy=art.occupancy_by_operator[op],
            upt_mean_mbps=summary["mean"] / 1e6,
            upt_p5_mbps=summary["p5"] / 1e6,
            upt_p50_mbps=summary["p50"] / 1e6,
            upt_p95_mbps=summary["p95"] / 1e6,
            voip_outage=outage,
            channel_occupancy_pct=_channel_occupancy_pct(cfg, art, topo, op),
            files_completed=len(completed),
            files_dropped=art.recorder.files_dropped[op],
        ))
    return rows


@dataclass
class RunReport:
    rows: list[MetricsRow]
    config: dict
    steps: tuple[int, ...]
    load_target: Optional[str]
    seeds: dict[int, int]
    event_logs: dict[tuple[int, int], list[tuple[int, int, str, str]]] = field(
        default_factory=dict)


def _run_one_replication(cfg: ScenarioConfig, rep: int, steps: tuple[int, ...],
                         ftp_rate: float, trace: bool):
    rep_seed = derive_rep_seed(cfg.master_seed, rep)
    topo = build_indoor_topology(cfg, RngStream(rep_seed, "topology"))
    traffic = generate_rep_traffic(cfg, topo, rep_seed, ftp_rate)
    rows: list[MetricsRow] = []
    logs = {}
    step1_occ = None
    for step in steps:
        art = run_replication_step(cfg, topo, traffic, rep_seed, step, trace=trace)
        if step == 1:
            step1_occ = art.occupancy_by_operator[1]
        rows.extend(build_step_rows(cfg, topo, art, rep, step))
        if trace:
            logs[(rep, step)] = art.sim.event_log
    # The load class of a replication is defined by the non-replaced
    # operator's step-1 occupancy; fall back to the first row when only
    # step 2 was requested.
    ref_occ = step1_occ if step1_occ is not None else rows[0].mean_occupancy
    label = classify_load(min(max(ref_occ, 0.0), 1.0)).value
    for row in rows:
        row.load_class = label
    return rep, rep_seed, rows, logs


def run_two_step(cfg: ScenarioConfig, load: Optional[str] = None,
                 steps: tuple[int, ...] = (1, 2), trace: bool = False,
                 workers: int = 1) -> RunReport:
    """Run all replications of the requested steps under one traffic rate."""
    cfg.validate()
    ftp_rate = cfg.traffic.rate_for(load)
    results = []
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one_replication, cfg, rep, steps,
                                   ftp_rate, trace)
                       for rep in range(cfg.replications)]
            results = [f.result() for f in futures]
    else:
        for rep in range(cfg.replications):
            results.append(_run_one_replication(cfg, rep, steps, ftp_rate, trace))
    results.sort(key=lambda item: item[0])
    rows: list[MetricsRow] = []
    seeds = {}
    logs = {}
    for rep, rep_seed, rep_rows, rep_logs in results:
        seeds[rep] = rep_seed
        rows.extend(rep_rows)
        logs.update(rep_logs)
    return RunReport(rows, cfg.to_dict(), steps, load, seeds, logs)


# -- calibration -----------------------------------------------------------------


def measure_step1_occupancy(cfg: ScenarioConfig, ftp_rate: float,
                            replications: int) -> float:
    total = 0.0
    for rep in range(replications):
        rep_seed = derive_rep_seed(cfg.master_seed, rep)
        topo = build_indoor_topology(cfg, RngStream(rep_seed, "topology"))
        traffic = generate_rep_traffic(cfg, topo, rep_seed, ftp_rate)
        art = run_replication_step(cfg, topo, traffic, rep_seed, step=1)
        total += art.occupancy_by_operator[1]
    return total / replications


def calibrate_load(target_class: str, cfg: ScenarioConfig,
                   replications: int = 10, lo: float = 0.05, hi: float = 4.0,
                   max_iterations: int = 24) -> tuple[float, float]:
    """Bisect the per-client FTP arrival rate until step-1 operator-1 mean
    occupancy lands in the target band; returns (rate, achieved occupancy)."""
    try:
        band_lo, band_hi = LOAD_BANDS[LoadClass(target_class)]
    except (KeyError, ValueError):
        raise ValueError(f"target load class must be low/medium/high, got {target_class!r}")
    occ_lo = measure_step1_occupancy(cfg, lo, replications)
    if occ_lo > band_hi:
        raise RuntimeError(
            f"band [{band_lo}, {band_hi}] unreachable: occupancy {occ_lo:.3f} "
            f"at minimum rate {lo}")
    if band_lo <= occ_lo <= band_hi:
        return lo, occ_lo
    occ_hi = measure_step1_occupancy(cfg, hi, replications)
    while occ_hi < band_lo and hi < 512.0:
        lo, occ_lo = hi, occ_hi
        hi *= 2.0
        occ_hi = measure_step1_occupancy(cfg, hi, replications)
    if occ_hi < band_lo:
        raise RuntimeError(
            f"band [{band_lo}, {band_hi}] unreachable: occupancy {occ_hi:.3f} "
            f"at maximum rate {hi}")
    for _ in range(max_iterations):
        mid = (lo + hi) / 2.0
        occ = measure_step1_occupancy(cfg, mid, replications)
        if band_lo <= occ <= band_hi:
            return mid, occ
        if occ < band_lo:
            lo = mid
        else:
            hi = mid
    raise RuntimeError(
        f"bisection did not settle in the band; bracket rates [{lo}, {hi}]")


# -- emission -------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def emit_results(report: RunReport, out_dir: str) -> dict[str, str]:
    """Write results.csv, summary.json and any captured event logs."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "results.csv")
    rows = sorted(report.rows, key=lambda r: (r.replication, r.step, r.operator))
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])

    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as f:
        json.dump({
            "schema_version": SCHEMA_VERSION,
            "load_target": report.load_target,
            "steps": list(report.steps),
            "seeds": {str(k): v for k, v in sorted(report.seeds.items())},
            "aggregates": summarize(report.rows),
            "config": report.config,
        }, f, indent=2, sort_keys=True)
        f.write("\n")

    paths = {"results": csv_path, "summary": summary_path}
    if report.event_logs:
        trace_dir = os.path.join(out_dir, "traces")
        os.makedirs(trace_dir, exist_ok=True)
        for (rep, step), log in sorted(report.event_logs.items()):
            path = os.path.join(trace_dir, f"rep{rep}_step{step}.log")
            with open(path, "w", encoding="utf-8") as f:
                for fire_at, seq, target, kind in log:
                    f.write(f"{fire_at} {seq} {target} {kind}\n")
        paths["traces"] = trace_dir
    return paths


def summarize(rows: list[MetricsRow]) -> dict:
    """Aggregate deltas of the non-replaced operator between the two steps."""
    by_rep: dict[int, dict[int, MetricsRow]] = {}
    for r in rows:
        if r.operator == 1:
            by_rep.setdefault(r.replication, {})[r.step] = r
    ratios, outage1, outage2 = [], [], []
    for steps in by_rep.values():
        if 1 in steps and 2 in steps:
            s1, s2 = steps[1], steps[2]
            if s1.upt_mean_mbps == s1.upt_mean_mbps and s1.upt_mean_mbps > 0 \
                    and s2.upt_mean_mbps == s2.upt_mean_mbps:
                ratios.append(s2.upt_mean_mbps / s1.upt_mean_mbps)
            if s1.voip_outage == s1.voip_outage and s2.voip_outage == s2.voip_outage:
                outage1.append(s1.voip_outage)
                outage2.append(s2.voip_outage)
    out: dict[str, object] = {"paired_replications": len(ratios)}
    if ratios:
        ordered = sorted(ratios)
        mid = len(ordered) // 2
        median = (ordered[mid] if len(ordered) % 2
                  else (ordered[mid - 1] + ordered[mid]) / 2)
        out["upt_ratio_step2_over_step1"] = {
            "median": median,
            "mean": sum(ratios) / len(ratios),
            "improvement_pct_of_mean": 100.0 * (sum(ratios) / len(ratios) - 1.0),
            "values": ordered,
        }
    if outage1:
        out["voip_outage"] = {
            "step1_mean": sum(outage1) / len(outage1),
            "step2_mean": sum(outage2) / len(outage2),
        }
    return out
