"""Scenario files: an INI dialect with one ``[obstacle.<name>]`` block per barrier.

Grammar (all sections except ``[true]`` overrides are required; unknown
sections or keys are rejected)::

    [scenario]   name, workspace = xmin, xmax, ymin, ymax, dt, max_steps,
                 initial_region = xmin, xmax, ymin, ymax,
                 train_region (defaults to initial_region),
                 encoding = static | relative, seed
    [goal]       center = x, y ; half_width
    [nominal]    r, L, u
    [true]       any of r, L, u (missing keys copy the nominal value)
    [filter]     K = k0, k1   or   chain_c = c1, c2 [chain_q = q1, q2] ;
                 k_theta, omega_max, eta = model | measured
    [train]      learning_rate, batch_size, buffer_size, trajectories,
                 steps, seed, hidden = 200, 200, exploration, exploration_tau
    [obstacle.*] kind = static-circle | ellipse | moving-circle,
                 center = x, y ; radius ; weights = wx, wy ; velocity = vx, vy

Lines starting with ``#`` or ``;`` are comments.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .barrier import BarrierSpec, ClassK, EcbfGain, HocbfChain
from .dynamics import SystemParams
from .nominal_control import GoalSpec
from .residual_learner import ENCODINGS, TrainConfig


ETA_SOURCES = ("model", "measured")


class ParseError(ValueError):
    """Malformed scenario text or an unparseable value."""


class ValidationError(ValueError):
    """Well-formed scenario that violates a model invariant."""


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    workspace: tuple[float, float, float, float]
    barriers: tuple[BarrierSpec, ...]
    goal: GoalSpec
    nominal: SystemParams
    true: SystemParams
    law: EcbfGain | HocbfChain
    dt: float = 0.1
    max_steps: int = 1500
    initial_region: tuple[float, float, float, float] = (-2.5, -1.5, -2.5, -1.5)
    train_region: tuple[float, float, float, float] | None = None
    encoding: str = "static"
    k_theta: float = 2.0
    omega_max: float = 10.0
    seed: int = 0
    eta_source: str = "model"
    train: TrainConfig = field(default_factory=TrainConfig)
    barrier_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.train_region is None:
            object.__setattr__(self, "train_region", self.initial_region)
        if not self.barrier_names:
            object.__setattr__(self, "barrier_names", tuple(f"h{i}" for i in range(len(self.barriers))))
        validate(self)

    def with_train(self, **changes) -> "ScenarioConfig":
        return replace(self, train=replace(self.train, **changes))


def _inside(region, box) -> bool:
    return box[0] <= region[0] < region[1] <= box[1] and box[2] <= region[2] < region[3] <= box[3]


def validate(sc: ScenarioConfig) -> None:
    xmin, xmax, ymin, ymax = sc.workspace
    if not (xmin < xmax and ymin < ymax):
        raise ValidationError(f"empty workspace {sc.workspace}")
    if not _inside(sc.initial_region, sc.workspace):
        raise ValidationError("initial_region must be a nonempty box inside the workspace")
    if not _inside(sc.train_region, sc.workspace):
        raise ValidationError("train_region must be a nonempty box inside the workspace")
    if not sc.barriers:
        raise ValidationError("at least one obstacle block is required")
    if sc.encoding not in ENCODINGS:
        raise ValidationError(f"encoding must be one of {ENCODINGS}")
    if sc.encoding == "static" and any(b.is_moving for b in sc.barriers):
        raise ValidationError("moving obstacles need encoding = relative")
    if not sc.dt > 0:
        raise ValidationError("dt must be positive")
    if sc.max_steps < 1:
        raise ValidationError("max_steps must be at least 1")
    if not (sc.k_theta > 0 and sc.omega_max > 0):
        raise ValidationError("k_theta and omega_max must be positive")
    if sc.eta_source not in ETA_SOURCES:
        raise ValidationError(f"eta must be one of {ETA_SOURCES}")
    if sc.eta_source == "measured" and not isinstance(sc.law, EcbfGain):
        raise ValidationError("eta = measured needs a K gain")
    if isinstance(sc.law, EcbfGain):
        if sc.law.order != 2:
            raise ValidationError("K must have two entries (relative degree two)")
        if any(k < 0 for k in sc.law.K) or not sc.law.is_hurwitz():
            raise ValidationError(f"K = {sc.law.K} does not give a stable companion polynomial")


# --------------------------------------------------------------------------
# Text format
# --------------------------------------------------------------------------

_SCHEMA = {
    "scenario": {"name", "workspace", "dt", "max_steps", "initial_region", "train_region", "encoding", "seed"},
    "goal": {"center", "half_width"},
    "nominal": {"r", "L", "u"},
    "true": {"r", "L", "u"},
    "filter": {"K", "chain_c", "chain_q", "k_theta", "omega_max", "eta"},
    "train": {"learning_rate", "batch_size", "buffer_size", "trajectories", "steps", "seed", "hidden", "exploration", "exploration_tau"},
    "obstacle": {"kind", "center", "radius", "weights", "velocity"},
}
_REQUIRED = {
    "scenario": {"name", "workspace", "initial_region"},
    "goal": {"center", "half_width"},
    "nominal": {"r", "L", "u"},
    "filter": set(),
    "obstacle": {"kind", "center", "radius"},
}


def _line_index(text: str) -> dict:
    """Map ``(section, key)`` to its 1-based line number for diagnostics."""
    index, section = {}, None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[(.+)\]$", s)
        if m:
            section = m.group(1).strip()
            index[(section, None)] = n
        elif section and s and s[0] not in "#;":
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip()
            index.setdefault((section, key), n)
    return index


class _Reader:
    def __init__(self, parser, lines, source):
        self.parser, self.lines, self.source = parser, lines, source

    def where(self, section, key=None) -> str:
        n = self.lines.get((section, key)) or self.lines.get((section, None))
        loc = f"{self.source}:{n}" if n else self.source
        return f"{loc} [{section}]" + (f" {key}" if key else "")

    def raw(self, section, key):
        return self.parser.get(section, key)

    def has(self, section, key) -> bool:
        return self.parser.has_section(section) and self.parser.has_option(section, key)

    def number(self, section, key, kind=float):
        text = self.raw(section, key).strip()
        try:
            return kind(text)
        except ValueError:
            raise ParseError(f"{self.where(section, key)}: expected {kind.__name__}, got {text!r}") from None

    def vector(self, section, key, length=None, kind=float):
        text = self.raw(section, key)
        try:
            vals = tuple(kind(v) for v in text.split(",") if v.strip())
        except ValueError:
            raise ParseError(f"{self.where(section, key)}: expected comma-separated numbers, got {text!r}") from None
        if length is not None and len(vals) != length:
            raise ParseError(f"{self.where(section, key)}: expected {length} values, got {len(vals)}")
        return vals


def parse_scenario(text: str, source: str = "<string>") -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str  # keep 'L' distinct from 'l'
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ParseError(str(exc)) from None
    rd = _Reader(parser, _line_index(text), source)

    for section in parser.sections():
        base = "obstacle" if section.startswith("obstacle.") else section
        if base not in _SCHEMA:
            raise ParseError(f"{rd.where(section)}: unknown section")
        unknown = set(parser.options(section)) - _SCHEMA[base]
        if unknown:
            key = sorted(unknown)[0]
            raise ParseError(f"{rd.where(section, key)}: unknown key")
        missing = _REQUIRED.get(base, set()) - set(parser.options(section))
        if missing:
            raise ParseError(f"{rd.where(section)}: missing key(s) {', '.join(sorted(missing))}")
    for section in ("scenario", "goal", "nominal", "filter"):
        if not parser.has_section(section):
            raise ParseError(f"{source}: missing section [{section}]")

    def guarded(section, key, build):
        try:
            return build()
        except ValidationError:
            raise
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ValidationError(f"{rd.where(section, key)}: {exc}") from None

    nominal = guarded("nominal", None, lambda: SystemParams(
        rd.number("nominal", "r"), rd.number("nominal", "L"), rd.number("nominal", "u")))
    true_vals = {}
    if parser.has_section("true"):
        for key in ("r", "L", "u"):
            if rd.has("true", key):
                true_vals[key] = rd.number("true", key)
    true = guarded("true", None, lambda: replace(nominal, **true_vals))

    if rd.has("filter", "K") == rd.has("filter", "chain_c"):
        raise ParseError(f"{rd.where('filter')}: give exactly one of K or chain_c")
    if rd.has("filter", "K"):
        law = EcbfGain(rd.vector("filter", "K"))
    else:
        cs = rd.vector("filter", "chain_c")
        qs = rd.vector("filter", "chain_q", len(cs)) if rd.has("filter", "chain_q") else (1.0,) * len(cs)
        law = guarded("filter", "chain_c", lambda: HocbfChain(cs, tuple(ClassK(q) for q in qs)))

    goal = guarded("goal", "half_width", lambda: GoalSpec(
        rd.vector("goal", "center", 2), rd.number("goal", "half_width")))

    names, barriers = [], []
    for section in parser.sections():
        if not section.startswith("obstacle."):
            continue
        kind = rd.raw(section, "kind").strip()
        kwargs = dict(
            kind=kind,
            center=rd.vector(section, "center", 2),
            radius=rd.number(section, "radius"),
        )
        if rd.has(section, "weights"):
            kwargs["weights"] = rd.vector(section, "weights", 2)
        if rd.has(section, "velocity"):
            kwargs["velocity"] = rd.vector(section, "velocity", 2)
        barriers.append(guarded(section, "kind", lambda: BarrierSpec(**kwargs)))
        names.append(section.split(".", 1)[1])

    train_kw = {}
    if parser.has_section("train"):
        for key in ("batch_size", "buffer_size", "trajectories", "steps", "seed"):
            if rd.has("train", key):
                train_kw[key] = rd.number("train", key, int)
        for key in ("learning_rate", "exploration", "exploration_tau"):
            if rd.has("train", key):
                train_kw[key] = rd.number("train", key)
        if rd.has("train", "hidden"):
            train_kw["hidden"] = rd.vector("train", "hidden", kind=int)
    train = guarded("train", None, lambda: TrainConfig(**train_kw))

    kw = dict(
        name=rd.raw("scenario", "name").strip(),
        workspace=rd.vector("scenario", "workspace", 4),
        barriers=tuple(barriers),
        goal=goal,
        nominal=nominal,
        true=true,
        law=law,
        initial_region=rd.vector("scenario", "initial_region", 4),
        train=train,
        barrier_names=tuple(names),
    )
    if rd.has("scenario", "train_region"):
        kw["train_region"] = rd.vector("scenario", "train_region", 4)
    if rd.has("scenario", "dt"):
        kw["dt"] = rd.number("scenario", "dt")
    if rd.has("scenario", "max_steps"):
        kw["max_steps"] = rd.number("scenario", "max_steps", int)
    if rd.has("scenario", "encoding"):
        kw["encoding"] = rd.raw("scenario", "encoding").strip()
    if rd.has("scenario", "seed"):
        kw["seed"] = rd.number("scenario", "seed", int)
    for key in ("k_theta", "omega_max"):
        if rd.has("filter", key):
            kw[key] = rd.number("filter", key)
    if rd.has("filter", "eta"):
        kw["eta_source"] = rd.raw("filter", "eta").strip()
    try:
        return ScenarioConfig(**kw)
    except ValidationError as exc:
        raise ValidationError(f"{source}: {exc}") from None


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    return parse_scenario(path.read_text(), source=str(path))


def bundled_scenarios() -> list[str]:
    root = resources.files("hocbf") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".cfg"))


def load_bundled(name: str) -> ScenarioConfig:
    """Load one of the packaged experiment files, e.g. ``"experiment1_u.cfg"``."""
    if not name.endswith(".cfg"):
        name += ".cfg"
    res = resources.files("hocbf") / "scenarios" / name
    return parse_scenario(res.read_text(), source=name)
