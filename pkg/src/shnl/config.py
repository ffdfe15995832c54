"""Run configuration: TOML parsing, validation, serialization, initial data.

Every key has a default except ``domain.sizes`` and ``model.variant``.
Unknown keys are errors, reported with the line they appear on.
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .domain import Domain, Field, build_domain, read_field
from .errors import ConfigError, DomainError, KernelError, ModelError, StepperError
from .kernels import KernelSpec
from .model import ModelSpec, Nonlinearity, check_A1, validate
from .analysis import NormSpec
from .stepper import StepperConfig

INITIAL_KINDS = ("constant", "cosine-modes", "random-smooth", "file")
PRESETS = ("quadratic-cubic", "cubic-quintic", "none", "custom")
FORMATS = ("csv", "json")


@dataclass(frozen=True)
class InitialCondition:
    kind: str = "random-smooth"
    value: float = 0.0
    modes: tuple[tuple[tuple[int, ...], float], ...] = ()
    seed: int = 0
    cutoff: int = 6
    amplitude: float = 0.5
    path: str | None = None
    mollify: bool = False


@dataclass(frozen=True)
class DispersionBlock:
    modes: tuple[int, ...] = (0, 1, 2, 3)
    tolerance: float = 1e-6


@dataclass(frozen=True)
class OutputBlock:
    directory: str = "out"
    formats: tuple[str, ...] = FORMATS
    snapshots: bool = True


@dataclass(frozen=True)
class RunConfig:
    domain: Domain
    model: ModelSpec
    eps_list: tuple[float, ...] = (0.4, 0.2, 0.1, 0.05)
    stepper: StepperConfig = field(default_factory=StepperConfig)
    initial: InitialCondition = field(default_factory=InitialCondition)
    norms: tuple[NormSpec, ...] = (NormSpec("Lp", 2.0), NormSpec("Hs", 1.0))
    dispersion: DispersionBlock = field(default_factory=DispersionBlock)
    output: OutputBlock = field(default_factory=OutputBlock)


# -- parsing helpers ----------------------------------------------------------


class _Reader:
    """Typed access to one TOML table with line-numbered diagnostics."""

    def __init__(self, text: str, table: dict, section: str):
        self.text = text
        self.table = dict(table)
        self.section = section
        self.used: set[str] = set()

    def line(self, key: str | None = None) -> int | None:
        return _find_line(self.text, self.section, key)

    def error(self, key, message):
        where = f"{self.section}.{key}" if key else self.section
        return ConfigError(f"[{where}] {message}", self.line(key))

    def get(self, key, kind, default=None, required=False):
        self.used.add(key)
        if key not in self.table:
            if required:
                raise self.error(None, f"missing required key {key!r}")
            return default
        value = self.table[key]
        ok = {
            "float": isinstance(value, (int, float)) and not isinstance(value, bool),
            "int": isinstance(value, int) and not isinstance(value, bool),
            "bool": isinstance(value, bool),
            "str": isinstance(value, str),
            "floats": isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value),
            "ints": isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value),
            "strs": isinstance(value, list) and all(isinstance(v, str) for v in value),
            "tables": isinstance(value, list) and all(isinstance(v, dict) for v in value),
        }[kind]
        if not ok:
            raise self.error(key, f"expected {kind}, got {value!r}")
        if kind == "float":
            value = float(value)
            if not math.isfinite(value):
                raise self.error(key, "must be finite")
        elif kind == "floats":
            value = tuple(float(v) for v in value)
        elif kind in ("ints", "strs"):
            value = tuple(value)
        return value

    def finish(self):
        for key in self.table:
            if key not in self.used:
                raise self.error(key, f"unknown key {key!r}")


def _find_line(text: str, section: str, key: str | None) -> int | None:
    """1-based line of ``key`` inside ``[section]`` (or of the header itself)."""
    current = ""
    header_line = None
    base = section.split("#")[0]
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[\[?\s*([^\]]+?)\s*\]\]?", line)
        if m:
            current = m.group(1)
            if current == base and header_line is None:
                header_line = i
            continue
        if current == base and key and re.match(rf"^{re.escape(key)}\s*=", line):
            return i
    return header_line


def _wrap(exc: Exception, reader: _Reader, key: str | None) -> ConfigError:
    return ConfigError(str(exc), reader.line(key))


# -- sections -----------------------------------------------------------------

_TOP = {"domain", "model", "kernel", "qkernel", "stepper", "initial", "analysis", "dispersion", "output"}


def parse_config(text: str, base_dir: str | Path | None = None) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"syntax error: {exc}", int(m.group(1)) if m else None) from None
    for key in data:
        if key not in _TOP:
            raise ConfigError(f"unknown section {key!r}", _find_line(text, key, None))
        if not isinstance(data[key], dict):
            raise ConfigError(f"{key!r} must be a section", _find_line(text, "", key))

    if "domain" not in data:
        raise ConfigError("missing required section [domain]")
    if "model" not in data:
        raise ConfigError("missing required section [model]")

    domain = _parse_domain(text, data["domain"])
    kernel = _parse_kernel(text, data.get("kernel", {}), "kernel", KernelSpec(), base_dir)
    qkernel = _parse_kernel(text, data.get("qkernel", {}), "qkernel", KernelSpec(amplitude=0.5), base_dir)
    model, eps_list = _parse_model(text, data["model"], kernel, qkernel)
    stepper = _parse_stepper(text, data.get("stepper", {}))
    initial = _parse_initial(text, data.get("initial", {}), domain, base_dir)
    norms = _parse_analysis(text, data.get("analysis", {}))
    dispersion = _parse_dispersion(text, data.get("dispersion", {}))
    output = _parse_output(text, data.get("output", {}))
    return RunConfig(domain, model, eps_list, stepper, initial, norms, dispersion, output)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent)


def _parse_domain(text, table) -> Domain:
    rd = _Reader(text, table, "domain")
    sizes = rd.get("sizes", "ints", required=True)
    dim = rd.get("dim", "int", len(sizes))
    lengths = rd.get("lengths", "floats", (2 * math.pi,) * dim)
    rd.finish()
    try:
        return build_domain(dim, lengths, sizes)
    except DomainError as exc:
        raise _wrap(exc, rd, "sizes") from None


def _parse_kernel(text, table, section, default: KernelSpec, base_dir) -> KernelSpec:
    rd = _Reader(text, table, section)
    family = rd.get("family", "str", default.family)
    path = rd.get("path", "str", default.path)
    if path is not None and base_dir is not None and not Path(path).is_absolute():
        path = str(Path(base_dir) / path)
    try:
        spec = KernelSpec(
            family=family,
            base_scale=rd.get("base_scale", "float", default.base_scale),
            sign=rd.get("sign", "str", default.sign),
            amplitude=rd.get("amplitude", "float", default.amplitude),
            path=path,
        )
    except KernelError as exc:
        raise _wrap(exc, rd, "family") from None
    rd.finish()
    return spec


def _parse_nonlinearity(rd: _Reader) -> Nonlinearity:
    preset = rd.get("nonlinearity", "str", "quadratic-cubic")
    if preset not in PRESETS:
        raise rd.error("nonlinearity", f"must be one of {PRESETS}")
    b = rd.get("b", "float", None)
    s = rd.get("s", "float", None)
    coeffs = rd.get("coefficients", "floats", None)
    if preset != "quadratic-cubic" and b is not None:
        raise rd.error("b", "b only applies to the quadratic-cubic preset")
    if preset != "cubic-quintic" and s is not None:
        raise rd.error("s", "s only applies to the cubic-quintic preset")
    if preset != "custom" and coeffs is not None:
        raise rd.error("coefficients", "coefficients only apply to nonlinearity = 'custom'")
    try:
        if preset == "quadratic-cubic":
            return Nonlinearity.quadratic_cubic(1.0 if b is None else b)
        if preset == "cubic-quintic":
            return Nonlinearity.cubic_quintic(1.0 if s is None else s)
        if preset == "none":
            return Nonlinearity.zero()
        if coeffs is None:
            raise rd.error("nonlinearity", "custom nonlinearity needs coefficients")
        return Nonlinearity(coeffs)
    except ModelError as exc:
        raise _wrap(exc, rd, "coefficients") from None


def _parse_model(text, table, kernel, qkernel):
    rd = _Reader(text, table, "model")
    variant = rd.get("variant", "str", required=True)
    nl = _parse_nonlinearity(rd)
    eps_list = rd.get("eps_list", "floats", (0.4, 0.2, 0.1, 0.05))
    eps = rd.get("eps", "float", eps_list[0] if eps_list else 0.1)
    kw = dict(
        variant=variant,
        r=rd.get("r", "float", 0.0),
        gamma=rd.get("gamma", "float", 0.0),
        nonlinearity=nl,
        p=rd.get("p", "int", 1),
        q=rd.get("q", "int", 2),
        kernel=kernel,
        qkernel=qkernel,
        eps=eps,
        sign_convention=rd.get("sign_convention", "str", "dissipative"),
        override_gamma_check=rd.get("override_gamma_check", "bool", False),
    )
    rd.finish()
    if any(e <= 0 for e in eps_list) or any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise rd.error("eps_list", "eps_list must be positive and strictly decreasing")
    try:
        spec = ModelSpec(**kw)
    except ModelError as exc:
        msg = str(exc)
        key = "q" if "q even" in msg else "variant" if "variant" in msg else "eps" if "eps" in msg else None
        raise _wrap(exc, rd, key) from None
    try:
        if variant != "two-kernel" and not nl.is_zero:
            check_A1(nl)
        validate(spec)
    except ModelError as exc:
        key = "gamma" if "γ" in str(exc) else "nonlinearity"
        raise _wrap(exc, rd, key) from None
    return spec, eps_list


def _parse_stepper(text, table) -> StepperConfig:
    rd = _Reader(text, table, "stepper")
    guard = rd.table.get("energy_guard", "auto")
    rd.used.add("energy_guard")
    if guard == "auto":
        guard = None
    elif not isinstance(guard, bool):
        raise rd.error("energy_guard", "expected true, false or 'auto'")
    try:
        cfg = StepperConfig(
            scheme=rd.get("scheme", "str", "imex1"),
            dt=rd.get("dt", "float", 1e-3),
            T=rd.get("T", "float", 1.0),
            snapshot_stride=rd.get("snapshot_stride", "int", 1),
            energy_guard=guard,
        )
    except StepperError as exc:
        raise _wrap(exc, rd, "dt" if "dt" in str(exc) or "T " in str(exc) else "scheme") from None
    rd.finish()
    return cfg


def _parse_initial(text, table, domain, base_dir) -> InitialCondition:
    rd = _Reader(text, table, "initial")
    kind = rd.get("kind", "str", "random-smooth")
    if kind not in INITIAL_KINDS:
        raise rd.error("kind", f"must be one of {INITIAL_KINDS}")
    modes = []
    for entry in rd.get("modes", "tables", []):
        extra = set(entry) - {"k", "amplitude"}
        if extra:
            raise rd.error("modes", f"unknown key {sorted(extra)[0]!r} in a mode entry")
        k = entry.get("k")
        k = (k,) if isinstance(k, int) and not isinstance(k, bool) else k
        if not (isinstance(k, (list, tuple)) and len(k) == domain.dim and all(isinstance(i, int) and i >= 0 for i in k)):
            raise rd.error("modes", f"mode index must be {domain.dim} nonnegative integers, got {entry.get('k')!r}")
        amp = entry.get("amplitude", 1.0)
        if isinstance(amp, bool) or not isinstance(amp, (int, float)):
            raise rd.error("modes", "mode amplitude must be a number")
        modes.append((tuple(k), float(amp)))
    path = rd.get("path", "str", None)
    if path is not None and base_dir is not None and not Path(path).is_absolute():
        path = str(Path(base_dir) / path)
    ic = InitialCondition(
        kind=kind,
        value=rd.get("value", "float", 0.0),
        modes=tuple(modes),
        seed=rd.get("seed", "int", 0),
        cutoff=rd.get("cutoff", "int", 6),
        amplitude=rd.get("amplitude", "float", 0.5),
        path=path,
        mollify=rd.get("mollify", "bool", False),
    )
    rd.finish()
    if kind == "file" and not path:
        raise rd.error("kind", "file initial data need a path")
    if ic.cutoff < 1:
        raise rd.error("cutoff", "cutoff must be at least 1")
    if not 0 <= ic.seed < 2**64:
        raise rd.error("seed", "seed must fit in an unsigned 64-bit integer")
    return ic


def _parse_analysis(text, table) -> tuple[NormSpec, ...]:
    rd = _Reader(text, table, "analysis")
    margin = rd.get("margin", "float", None)
    entries = rd.get("norms", "tables", None)
    rd.finish()
    if entries is None:
        return RunConfig.__dataclass_fields__["norms"].default
    out = []
    for entry in entries:
        sub = _Reader(text, entry, "analysis.norms")
        try:
            ns = NormSpec(
                kind=sub.get("kind", "str", "Lp"),
                s=sub.get("s", "float", 2.0),
                time_reduction=sub.get("time_reduction", "str", "max"),
                margin=margin if sub.get("interior", "bool", False) else None,
            )
        except ValueError as exc:
            raise _wrap(exc, sub, "kind") from None
        sub.finish()
        out.append(ns)
    return tuple(out)


def _parse_dispersion(text, table) -> DispersionBlock:
    rd = _Reader(text, table, "dispersion")
    blk = DispersionBlock(
        modes=rd.get("modes", "ints", (0, 1, 2, 3)),
        tolerance=rd.get("tolerance", "float", 1e-6),
    )
    rd.finish()
    if not blk.modes or any(k < 0 for k in blk.modes):
        raise rd.error("modes", "modes must be nonnegative integers")
    return blk


def _parse_output(text, table) -> OutputBlock:
    rd = _Reader(text, table, "output")
    blk = OutputBlock(
        directory=rd.get("directory", "str", "out"),
        formats=rd.get("formats", "strs", FORMATS),
        snapshots=rd.get("snapshots", "bool", True),
    )
    rd.finish()
    bad = [f for f in blk.formats if f not in FORMATS]
    if bad:
        raise rd.error("formats", f"unsupported format {bad[0]!r}")
    return blk


# -- serialization ------------------------------------------------------------


def _kernel_dict(k: KernelSpec) -> dict:
    d = {"family": k.family, "base_scale": k.base_scale, "sign": k.sign, "amplitude": k.amplitude}
    if k.path is not None:
        d["path"] = k.path
    return d


def _nonlinearity_dict(nl: Nonlinearity) -> dict:
    if nl.name == "quadratic-cubic":
        return {"nonlinearity": nl.name, "b": nl.coefficients[2]}
    if nl.name == "cubic-quintic":
        return {"nonlinearity": nl.name, "s": nl.coefficients[3]}
    if nl.is_zero:
        return {"nonlinearity": "none"}
    return {"nonlinearity": "custom", "coefficients": list(nl.coefficients)}


def to_dict(cfg: RunConfig) -> dict:
    m = cfg.model
    model = {"variant": m.variant, "r": m.r, "gamma": m.gamma, **_nonlinearity_dict(m.nonlinearity)}
    model.update(p=m.p, q=m.q, eps=m.eps, eps_list=list(cfg.eps_list), sign_convention=m.sign_convention)
    model["override_gamma_check"] = m.override_gamma_check
    st = cfg.stepper
    stepper = {"scheme": st.scheme, "dt": st.dt, "T": st.T, "snapshot_stride": st.snapshot_stride}
    stepper["energy_guard"] = "auto" if st.energy_guard is None else st.energy_guard
    ic = cfg.initial
    initial = {
        "kind": ic.kind,
        "value": ic.value,
        "seed": ic.seed,
        "cutoff": ic.cutoff,
        "amplitude": ic.amplitude,
        "mollify": ic.mollify,
        "modes": [{"k": list(k), "amplitude": a} for k, a in ic.modes],
    }
    if ic.path is not None:
        initial["path"] = ic.path
    margins = {n.margin for n in cfg.norms if n.margin is not None}
    if len(margins) > 1:
        raise ConfigError("norms with different interior margins cannot be serialized")
    analysis = {
        "norms": [
            {"kind": n.kind, "s": n.s, "time_reduction": n.time_reduction, "interior": n.margin is not None}
            for n in cfg.norms
        ]
    }
    if margins:
        analysis["margin"] = margins.pop()
    return {
        "domain": {"dim": cfg.domain.dim, "lengths": list(cfg.domain.lengths), "sizes": list(cfg.domain.sizes)},
        "model": model,
        "kernel": _kernel_dict(m.kernel),
        "qkernel": _kernel_dict(m.qkernel),
        "stepper": stepper,
        "initial": initial,
        "analysis": analysis,
        "dispersion": {"modes": list(cfg.dispersion.modes), "tolerance": cfg.dispersion.tolerance},
        "output": {
            "directory": cfg.output.directory,
            "formats": list(cfg.output.formats),
            "snapshots": cfg.output.snapshots,
        },
    }


def serialize_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


# -- initial data -------------------------------------------------------------


def _cosine(domain: Domain, k) -> np.ndarray:
    out = np.ones(domain.shape)
    for ki, x, L in zip(k, domain.mesh(), domain.lengths):
        out = out * np.cos(math.pi * ki * x / L)
    return out


def build_initial(ic: InitialCondition, domain: Domain, seed: int | None = None) -> Field:
    """Initial data u_0; ``seed`` overrides the configured seed."""
    if ic.kind == "constant":
        return Field(domain, np.full(domain.shape, ic.value))
    if ic.kind == "cosine-modes":
        u = np.zeros(domain.shape)
        for k, a in ic.modes:
            u += a * _cosine(domain, k)
        return Field(domain, u)
    if ic.kind == "file":
        u = read_field(ic.path)
        if u.domain != domain:
            raise ConfigError(f"initial data file {ic.path} is on a different domain")
        return u
    rng = np.random.default_rng(ic.seed if seed is None else seed)
    cut = [min(ic.cutoff, n) for n in domain.sizes]
    coeffs = rng.standard_normal(cut)
    u = np.zeros(domain.shape)
    for k in np.ndindex(*cut):
        u += coeffs[k] / (1 + sum(k)) ** 2 * _cosine(domain, k)
    peak = float(np.max(np.abs(u)))
    return Field(domain, ic.amplitude * u / peak if peak > 0 else u)


def with_seed(cfg: RunConfig, seed: int | None) -> RunConfig:
    if seed is None:
        return cfg
    return replace(cfg, initial=replace(cfg.initial, seed=int(seed)))
