"""Experiment configuration, Monte-Carlo sweeps and CSV output."""

import csv
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.algorithms import SolveOptions, check_options
from src.channel import ChannelSet, FadingParams, ScenarioGeometry, build_scenario
from src.config import (
    CSV_HEADER,
    HALF_CIRCLE_RADIUS,
    M_ELEMENTS_DESK,
    N_STREAMS,
    N_TX,
    N_USER_R,
    N_USER_T,
    NOISE_POWER_DBM,
    PATHLOSS_EXPONENT,
    PATHLOSS_REF_GAIN,
    POWER_BUDGET_DBM,
    RICIAN_K_DB,
    RIS_POSITION,
    TX_POSITION,
    USER_HEIGHT,
    WEIGHT_SUM_TOL,
    WEIGHTS,
    dbm_to_watts,
)
from src.driver import SCHEME_LABELS, solve_broadcast, solve_scheme
from src.errors import ConfigError, SolverError, VerificationError, Violation
from src.model import PrecoderSet, ProtocolKind, StarConfig, SystemSpec, Traffic, wsr

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

logger = logging.getLogger(__name__)

SWEEP_VARIABLES = ("none", "power_dbm", "m_elements")
VERIFY_SAMPLE = 10
VERIFY_TOL = 1e-9


def _option_kind(default: Any) -> str:
    if isinstance(default, str):
        return "str"
    return "int" if isinstance(default, int) else "float"


# kind, default
SCHEMA: Dict[str, Dict[str, Tuple[str, Any]]] = {
    "scenario": {
        "tx_position": ("point", TX_POSITION),
        "ris_position": ("point", RIS_POSITION),
        "half_circle_radius": ("float", HALF_CIRCLE_RADIUS),
        "user_height": ("float", USER_HEIGHT),
        "rician_k_db": ("float", RICIAN_K_DB),
        "pathloss_exponent": ("float", PATHLOSS_EXPONENT),
        "pathloss_ref_gain": ("float", PATHLOSS_REF_GAIN),
        "noise_power_dbm": ("float", NOISE_POWER_DBM),
        "t_user_azimuth_deg": ("optional_float", None),
        "r_user_azimuth_deg": ("optional_float", None),
    },
    "system": {
        "n_tx": ("int", N_TX),
        "n_user_t": ("int", N_USER_T),
        "n_user_r": ("int", N_USER_R),
        "n_streams": ("int_pair", N_STREAMS),
        "m_elements": ("int", M_ELEMENTS_DESK),
        "weights": ("float_pair", WEIGHTS),
        "power_dbm": ("float", POWER_BUDGET_DBM),
        "traffic": ("str", "unicast"),
    },
    "experiment": {
        "protocols": ("str_list", ("ES", "MS", "TS")),
        "sweep": ("str", "none"),
        "values": ("float_list", ()),
        "trials": ("int", 1),
        "base_seed": ("int", 0),
        "output": ("str", "results/default.csv"),
    },
    "solver": {f.name: (_option_kind(f.default), f.default) for f in fields(SolveOptions)},
}


@dataclass(frozen=True)
class ScenarioSettings:
    """[scenario]: geometry and fading, dB/dBm/degree units as written in the file."""

    tx_position: Tuple[float, ...] = TX_POSITION
    ris_position: Tuple[float, ...] = RIS_POSITION
    half_circle_radius: float = HALF_CIRCLE_RADIUS
    user_height: float = USER_HEIGHT
    rician_k_db: float = RICIAN_K_DB
    pathloss_exponent: float = PATHLOSS_EXPONENT
    pathloss_ref_gain: float = PATHLOSS_REF_GAIN
    noise_power_dbm: float = NOISE_POWER_DBM
    t_user_azimuth_deg: Optional[float] = None
    r_user_azimuth_deg: Optional[float] = None

    def fading(self) -> FadingParams:
        return FadingParams.from_db(
            rician_k_db=self.rician_k_db,
            noise_power_dbm=self.noise_power_dbm,
            pathloss_exponent_ris=self.pathloss_exponent,
            pathloss_ref_gain=self.pathloss_ref_gain,
        )

    def geometry(self, rng: np.random.Generator) -> ScenarioGeometry:
        """User positions for one trial; pinned azimuths are not drawn."""
        pinned = [
            None if deg is None else math.radians(deg)
            for deg in (self.t_user_azimuth_deg, self.r_user_azimuth_deg)
        ]
        return ScenarioGeometry.sample(
            rng,
            t_azimuth=pinned[0],
            r_azimuth=pinned[1],
            tx_position=self.tx_position,
            ris_position=self.ris_position,
            radius=self.half_circle_radius,
            user_height=self.user_height,
        )


@dataclass(frozen=True)
class SystemSettings:
    """[system]: antenna counts, weights, power budget and traffic mode."""

    n_tx: int = N_TX
    n_user_t: int = N_USER_T
    n_user_r: int = N_USER_R
    n_streams: Tuple[int, ...] = N_STREAMS
    m_elements: int = M_ELEMENTS_DESK
    weights: Tuple[float, ...] = WEIGHTS
    power_dbm: float = POWER_BUDGET_DBM
    traffic: str = "unicast"


@dataclass(frozen=True)
class ExperimentSettings:
    """[experiment]: schemes, sweep, trial count, seed and output path."""

    protocols: Tuple[str, ...] = ("ES", "MS", "TS")
    sweep: str = "none"
    values: Tuple[float, ...] = ()
    trials: int = 1
    base_seed: int = 0
    output: str = "results/default.csv"


@dataclass(frozen=True)
class ExperimentConfig:
    """A parsed and validated experiment file."""

    scenario: ScenarioSettings = field(default_factory=ScenarioSettings)
    system: SystemSettings = field(default_factory=SystemSettings)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    solver: SolveOptions = field(default_factory=SolveOptions)
    source: str = "<defaults>"

    @property
    def traffic(self) -> Traffic:
        return Traffic.parse(self.system.traffic)

    def sweep_values(self) -> List[Optional[float]]:
        """The swept values, or a single None when nothing is swept."""
        if self.experiment.sweep == "none":
            return [None]
        return list(self.experiment.values)

    def spec_for(self, sweep_value: Optional[float]) -> SystemSpec:
        """SystemSpec of one sweep point."""
        system = self.system
        power_dbm, m_elements = system.power_dbm, system.m_elements
        if sweep_value is not None and self.experiment.sweep == "power_dbm":
            power_dbm = sweep_value
        elif sweep_value is not None and self.experiment.sweep == "m_elements":
            m_elements = int(sweep_value)
        return SystemSpec(
            n_tx=system.n_tx,
            n_user_t=system.n_user_t,
            n_user_r=system.n_user_r,
            n_streams=(system.n_streams[0], system.n_streams[1]),
            m_elements=m_elements,
            weights=(system.weights[0], system.weights[1]),
            power_budget=dbm_to_watts(power_dbm),
            noise_power=dbm_to_watts(self.scenario.noise_power_dbm),
            traffic=self.traffic,
        )

    def with_overrides(
        self, base_seed: Optional[int] = None, protocols: Optional[Sequence[str]] = None
    ) -> "ExperimentConfig":
        experiment = self.experiment
        if base_seed is not None:
            experiment = replace(experiment, base_seed=int(base_seed))
        if protocols is not None:
            experiment = replace(experiment, protocols=tuple(protocols))
        return replace(self, experiment=experiment)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _coerce(kind: str, value: Any, default: Any, path: str, found: List[Violation]) -> Any:
    def bad(expected: str) -> Any:
        found.append(Violation(path, f"expected {expected}, got {value!r}"))
        return default

    def is_number(x: Any) -> bool:
        return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)

    if kind in ("float", "optional_float"):
        return float(value) if is_number(value) else bad("a finite number")
    if kind == "int":
        return int(value) if _is_int(value) else bad("an integer")
    if kind == "str":
        return value if isinstance(value, str) else bad("a string")
    if not isinstance(value, (list, tuple)):
        return bad("a list")
    if kind == "point":
        if len(value) != 3 or not all(is_number(x) for x in value):
            return bad("three numbers")
        return tuple(float(x) for x in value)
    if kind == "int_pair":
        if len(value) != 2 or not all(_is_int(x) for x in value):
            return bad("two integers")
        return tuple(value)
    if kind == "float_pair":
        if len(value) != 2 or not all(is_number(x) for x in value):
            return bad("two numbers")
        return tuple(float(x) for x in value)
    if kind == "str_list":
        if not all(isinstance(x, str) for x in value):
            return bad("a list of strings")
        return tuple(x.upper() for x in value)
    if kind == "float_list":
        if not all(is_number(x) for x in value):
            return bad("a list of numbers")
        return tuple(float(x) for x in value)
    raise AssertionError(f"unknown schema kind {kind}")


def _read_sections(raw: Mapping[str, Any], found: List[Violation]) -> Dict[str, Dict[str, Any]]:
    sections: Dict[str, Dict[str, Any]] = {}
    for name in raw:
        if name not in SCHEMA:
            found.append(Violation(name, "unknown section"))
    for name, keys in SCHEMA.items():
        table = raw.get(name, {})
        if not isinstance(table, Mapping):
            found.append(Violation(name, "must be a table"))
            table = {}
        values = {key: default for key, (_, default) in keys.items()}
        for key, value in table.items():
            path = f"{name}.{key}"
            if key not in keys:
                found.append(Violation(path, "unknown key"))
                continue
            kind, default = keys[key]
            values[key] = _coerce(kind, value, default, path, found)
        sections[name] = values
    return sections


def _semantic_violations(sections: Dict[str, Dict[str, Any]]) -> List[Violation]:
    found: List[Violation] = []
    scenario, system = sections["scenario"], sections["system"]
    experiment, solver = sections["experiment"], sections["solver"]

    for key in ("half_circle_radius", "pathloss_exponent", "pathloss_ref_gain"):
        if not scenario[key] > 0.0:
            found.append(Violation(f"scenario.{key}", f"must be > 0, got {scenario[key]}"))
    if scenario["tx_position"][1] >= scenario["ris_position"][1]:
        found.append(
            Violation("scenario.tx_position", "must lie on the reflection side (y < RIS y)")
        )
    for key in ("t_user_azimuth_deg", "r_user_azimuth_deg"):
        deg = scenario[key]
        if deg is not None and not 0.0 < deg < 180.0:
            found.append(Violation(f"scenario.{key}", f"must lie in (0, 180), got {deg}"))

    for key in ("n_tx", "n_user_t", "n_user_r", "m_elements"):
        if system[key] < 1:
            found.append(Violation(f"system.{key}", f"must be >= 1, got {system[key]}"))
    if min(system["n_streams"]) < 1:
        found.append(Violation("system.n_streams", "stream counts must be >= 1"))
    weights = system["weights"]
    if any(not 0.0 <= w <= 1.0 for w in weights):
        found.append(Violation("system.weights", f"weights must lie in [0, 1], got {weights}"))
    elif abs(sum(weights) - 1.0) > WEIGHT_SUM_TOL:
        found.append(
            Violation("system.weights", f"weights must sum to 1, got {sum(weights):.6g}")
        )
    try:
        Traffic.parse(system["traffic"])
    except ValueError as exc:
        found.append(Violation("system.traffic", str(exc)))

    protocols = experiment["protocols"]
    if not protocols:
        found.append(Violation("experiment.protocols", "must not be empty"))
    for label in protocols:
        if label not in SCHEME_LABELS:
            found.append(
                Violation("experiment.protocols", f"unknown scheme {label!r}; use {SCHEME_LABELS}")
            )
    if len(set(protocols)) != len(protocols):
        found.append(Violation("experiment.protocols", "schemes must not repeat"))
    sweep = experiment["sweep"]
    if sweep not in SWEEP_VARIABLES:
        found.append(Violation("experiment.sweep", f"must be one of {SWEEP_VARIABLES}"))
    elif sweep == "none":
        if experiment["values"]:
            found.append(
                Violation("experiment.values", "values are only read when a sweep is set")
            )
    else:
        values = experiment["values"]
        if not values:
            found.append(Violation("experiment.values", f"sweep over {sweep} needs values"))
        if sweep == "m_elements" and any(v < 1 or v != int(v) for v in values):
            found.append(Violation("experiment.values", "element counts must be integers >= 1"))
    if experiment["trials"] < 1:
        found.append(Violation("experiment.trials", f"must be >= 1, got {experiment['trials']}"))
    if experiment["base_seed"] < 0:
        found.append(Violation("experiment.base_seed", "must be >= 0"))
    if not experiment["output"]:
        found.append(Violation("experiment.output", "must not be empty"))

    found.extend(
        Violation(f"solver.{v.name}", v.detail, v.magnitude) for v in check_options(solver)
    )
    return found


def check_config(raw: Mapping[str, Any]) -> List[Violation]:
    """Every schema and invariant violation of a parsed TOML document, with dotted field paths."""
    found: List[Violation] = []
    sections = _read_sections(raw, found)
    found.extend(_semantic_violations(sections))
    return found


def parse_config(raw: Mapping[str, Any], source: str = "<memory>") -> ExperimentConfig:
    """Build an ExperimentConfig, raising ConfigError on the first violation."""
    found: List[Violation] = []
    sections = _read_sections(raw, found)
    found.extend(_semantic_violations(sections))
    if found:
        first = found[0]
        extra = f" (+{len(found) - 1} more)" if len(found) > 1 else ""
        raise ConfigError(f"{first.detail}{extra}", field=first.name)
    return ExperimentConfig(
        scenario=ScenarioSettings(**sections["scenario"]),
        system=SystemSettings(**sections["system"]),
        experiment=ExperimentSettings(**sections["experiment"]),
        solver=SolveOptions(**sections["solver"]),
        source=source,
    )


def read_toml(path: Path) -> Dict[str, Any]:
    """Parse a TOML file; syntax errors become ConfigError, unreadable files raise OSError."""
    with open(path, "rb") as handle:
        try:
            return tomllib.load(handle)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}", field=str(path)) from exc


def load_config(path: Path) -> ExperimentConfig:
    return parse_config(read_toml(path), source=str(path))


def validate_config(path: Path) -> List[Violation]:
    """Schema and invariant check of a config file without running anything."""
    try:
        raw = read_toml(path)
    except ConfigError as exc:
        return [Violation(exc.field or str(path), str(exc))]
    return check_config(raw)


@dataclass(frozen=True)
class ResultRow:
    """One (sweep value, scheme, trial) cell of an experiment."""

    sweep_var: str
    sweep_value: Optional[float]
    protocol: str
    traffic: str
    trial: int
    seed: int
    wsr: float
    rate_t: float
    rate_r: float
    tau_star: Optional[float]
    iterations: int
    wall_ms: float
    warnings: int
    config: StarConfig = field(repr=False, compare=False)
    precoders: PrecoderSet = field(repr=False, compare=False)

    def sort_key(self, order: Sequence[str]) -> Tuple[float, int, int]:
        value = -math.inf if self.sweep_value is None else self.sweep_value
        rank = order.index(self.protocol) if self.protocol in order else len(order)
        return value, rank, self.trial

    def csv_fields(self, timing: bool = False) -> List[str]:
        return [
            self.sweep_var,
            "" if self.sweep_value is None else format(self.sweep_value, "g"),
            self.protocol,
            self.traffic,
            str(self.trial),
            str(self.seed),
            _fmt(self.wsr),
            _fmt(self.rate_t),
            _fmt(self.rate_r),
            "" if self.tau_star is None else _fmt(self.tau_star),
            str(self.iterations),
            _fmt(self.wall_ms) if timing else "0",
            str(self.warnings),
        ]


def _fmt(value: float) -> str:
    return format(value, ".15g")


@dataclass(frozen=True)
class TrialTask:
    config: ExperimentConfig
    sweep_value: Optional[float]
    trial: int


def build_channels(config: ExperimentConfig, spec: SystemSpec, seed: int) -> ChannelSet:
    """Channel draw of one trial; every scheme of the trial sees the same draw."""
    rng = np.random.default_rng(seed)
    geometry = config.scenario.geometry(rng)
    return build_scenario(geometry, config.scenario.fading(), spec.antenna_counts(), rng)


def run_trial(task: TrialTask) -> List[ResultRow]:
    """Solve every configured scheme on one channel draw."""
    config = task.config
    seed = config.experiment.base_seed + task.trial
    spec = config.spec_for(task.sweep_value)
    channels = build_channels(config, spec, seed)
    rows = []
    for label in config.experiment.protocols:
        try:
            if spec.is_broadcast and label != "RO":
                report = solve_broadcast(spec, channels, config.solver, ProtocolKind.parse(label))
            else:
                report = solve_scheme(label, spec, channels, config.solver)
        except SolverError as exc:
            context = f"{label}, trial {task.trial}, sweep {task.sweep_value}"
            raise exc.with_context(context) from exc
        rows.append(
            ResultRow(
                sweep_var=config.experiment.sweep,
                sweep_value=task.sweep_value,
                protocol=label,
                traffic=spec.traffic.value,
                trial=task.trial,
                seed=seed,
                wsr=report.final_wsr,
                rate_t=report.per_user_rates[0],
                rate_r=report.per_user_rates[1],
                tau_star=report.tau_star,
                iterations=report.iterations,
                wall_ms=report.wall_ms,
                warnings=len(report.warnings),
                config=report.config,
                precoders=report.precoders,
            )
        )
    return rows


def run_experiment(
    config: ExperimentConfig,
    jobs: int = 1,
    progress: Optional[Callable[[int], None]] = None,
) -> List[ResultRow]:
    """Run every (sweep value x scheme x trial) cell and return rows in sorted order.

    Args:
        config: Parsed experiment
        jobs: Worker processes; 1 runs in-process
        progress: Called with the number of finished trials after each trial
    """
    tasks = [
        TrialTask(config, value, trial)
        for value in config.sweep_values()
        for trial in range(config.experiment.trials)
    ]
    rows: List[ResultRow] = []
    if jobs <= 1:
        for task in tasks:
            rows.extend(run_trial(task))
            if progress:
                progress(1)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for trial_rows in pool.map(run_trial, tasks):
                rows.extend(trial_rows)
                if progress:
                    progress(1)
    order = list(config.experiment.protocols)
    rows.sort(key=lambda row: row.sort_key(order))
    expected = len(tasks) * len(order)
    if len(rows) != expected:
        raise AssertionError(f"expected {expected} rows, got {len(rows)}")
    return rows


def write_csv(rows: Iterable[ResultRow], path: Path, timing: bool = False) -> None:
    """UTF-8 CSV with the fixed header; wall time is 0 unless timing is requested."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(row.csv_fields(timing))


def verify_rows(
    config: ExperimentConfig, rows: Sequence[ResultRow], sample: int = VERIFY_SAMPLE
) -> int:
    """Recompute the WSR of up to `sample` random rows from their recorded solutions.

    Raises:
        VerificationError: if a recomputation differs by more than 1e-9 (relative)
    """
    if not rows:
        return 0
    rng = np.random.default_rng(config.experiment.base_seed)
    picks = sorted(rng.choice(len(rows), size=min(sample, len(rows)), replace=False))
    for idx in picks:
        row = rows[int(idx)]
        spec = config.spec_for(row.sweep_value)
        channels = build_channels(config, spec, row.seed)
        recomputed = wsr(spec, channels, row.precoders, row.config)
        if abs(recomputed - row.wsr) > VERIFY_TOL * max(1.0, abs(row.wsr)):
            raise VerificationError(
                f"row {idx} ({row.protocol}, trial {row.trial}): recorded WSR {row.wsr!r}, "
                f"recomputed {recomputed!r}"
            )
    logger.debug("verified %d rows", len(picks))
    return len(picks)


@dataclass(frozen=True)
class SummaryRow:
    sweep_value: Optional[float]
    protocol: str
    mean_wsr: float
    std_wsr: float
    trials: int
    warnings: int


def summarize(rows: Sequence[ResultRow], order: Sequence[str]) -> List[SummaryRow]:
    """Ensemble mean and standard deviation of the WSR per sweep value and scheme."""
    groups: Dict[Tuple[Optional[float], str], List[ResultRow]] = {}
    for row in rows:
        groups.setdefault((row.sweep_value, row.protocol), []).append(row)
    summary = []
    for (value, label), members in groups.items():
        values = np.array([m.wsr for m in members])
        summary.append(
            SummaryRow(
                sweep_value=value,
                protocol=label,
                mean_wsr=float(values.mean()),
                std_wsr=float(values.std()),
                trials=len(members),
                warnings=sum(m.warnings for m in members),
            )
        )
    summary.sort(
        key=lambda s: (
            -math.inf if s.sweep_value is None else s.sweep_value,
            order.index(s.protocol) if s.protocol in order else len(order),
        )
    )
    return summary
