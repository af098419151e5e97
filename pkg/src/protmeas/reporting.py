"""Configuration files, result emission, and run manifests.

Configs are strict JSON: unknown keys are rejected, missing required
fields raise a named error, and every field the parser fills with a
default is recorded on the returned object.  CSV output carries exactly
the columns

    T, pointer_centroid, predicted_shift, centroid_error, disturbance,
    entropy_nats, validity, n_steps

with numbers at 17 significant digits, UTF-8, LF line endings, so the
same config and seed reproduce byte-identical files.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import __version__
from .analysis import SweepResult, compare_to_prediction
from .errors import ConfigError, OutputError, ProtmeasError
from .hilbert import PAULI_X, PAULI_Y, PAULI_Z, pauli_vector
from .measurement import (
    ApparatusSpec,
    MeasurementConfig,
    PointerSettings,
    RunResult,
)
from .scenarios import ColdAtomParams

SCHEMA_VERSION = 1

CSV_COLUMNS = (
    "T",
    "pointer_centroid",
    "predicted_shift",
    "centroid_error",
    "disturbance",
    "entropy_nats",
    "validity",
    "n_steps",
)

_PAULI_BY_NAME = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}


# ---------------------------------------------------------------------------
# config parsing


def _require_keys(data: dict, allowed: set[str], context: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{context} must be an object", field=context)
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) {sorted(unknown)} in {context}", field=sorted(unknown)[0]
        )


def _get(data: dict, key: str, default, defaults: list[str], context: str):
    if key in data:
        return data[key]
    if default is _REQUIRED:
        raise ConfigError(f"missing required field '{key}' in {context}", field=key)
    defaults.append(f"{context}.{key}" if context != "config" else key)
    return default


class _Required:
    pass


_REQUIRED = _Required()


def _parse_matrix(spec, context: str) -> np.ndarray:
    if not isinstance(spec, dict):
        raise ConfigError(f"{context} must be a matrix object", field=context)
    if "pauli" in spec:
        _require_keys(spec, {"pauli", "scale"}, context)
        name = spec["pauli"]
        if name not in _PAULI_BY_NAME:
            raise ConfigError(f"unknown Pauli name {name!r} in {context}", field=context)
        return float(spec.get("scale", 1.0)) * _PAULI_BY_NAME[name]
    if "pauli_axis" in spec:
        _require_keys(spec, {"pauli_axis", "scale"}, context)
        return float(spec.get("scale", 1.0)) * pauli_vector(spec["pauli_axis"])
    if "diag" in spec:
        _require_keys(spec, {"diag"}, context)
        return np.diag(np.asarray(spec["diag"], dtype=float)).astype(complex)
    if "re" in spec:
        _require_keys(spec, {"re", "im"}, context)
        re = np.asarray(spec["re"], dtype=float)
        im = np.asarray(spec.get("im", np.zeros_like(re)), dtype=float)
        if re.shape != im.shape or re.ndim != 2:
            raise ConfigError(f"{context} re/im must be matching 2-D arrays",
                              field=context)
        return re + 1j * im
    raise ConfigError(
        f"{context} needs one of: pauli, pauli_axis, diag, re/im", field=context
    )


def _parse_apparatus(data, defaults: list[str]) -> ApparatusSpec:
    _require_keys(data, {"h", "q"}, "apparatus")
    h_spec = _get(data, "h", "zero", defaults, "apparatus")
    q_spec = _get(data, "q", "translation", defaults, "apparatus")
    kwargs = {}
    if h_spec == "zero":
        kwargs.update(h_kind="zero")
    elif isinstance(h_spec, dict) and "kinetic" in h_spec:
        _require_keys(h_spec, {"kinetic"}, "apparatus.h")
        _require_keys(h_spec["kinetic"], {"mass"}, "apparatus.h.kinetic")
        kwargs.update(h_kind="kinetic", mass=float(h_spec["kinetic"]["mass"]))
    else:
        kwargs.update(h_kind="matrix", h_matrix=_parse_matrix(h_spec, "apparatus.h"))
    if q_spec == "translation":
        kwargs.update(q_kind="translation")
    else:
        kwargs.update(q_kind="matrix", q_matrix=_parse_matrix(q_spec, "apparatus.q"))
    return ApparatusSpec(**kwargs)


def _parse_measurement(data: dict) -> MeasurementConfig:
    allowed = {
        "schema_version", "kind", "mode", "total_time", "n_steps", "pointer",
        "packet", "system", "apparatus", "eigenstate_index", "seed", "profile",
        "tolerance",
    }
    _require_keys(data, allowed, "config")
    defaults: list[str] = []

    system = _get(data, "system", _REQUIRED, defaults, "config")
    _require_keys(system, {"h", "q"}, "system")
    if "h" not in system or "q" not in system:
        raise ConfigError("system needs both 'h' and 'q'", field="system")
    h_system = _parse_matrix(system["h"], "system.h")
    q_system = _parse_matrix(system["q"], "system.q")

    pointer_raw = _get(data, "pointer", {}, defaults, "config")
    _require_keys(pointer_raw, {"n_points", "r_min", "r_max"}, "pointer")
    pointer = PointerSettings(
        n_points=int(_get(pointer_raw, "n_points", 256, defaults, "pointer")),
        r_min=float(_get(pointer_raw, "r_min", -15.0, defaults, "pointer")),
        r_max=float(_get(pointer_raw, "r_max", 15.0, defaults, "pointer")),
    )
    packet_raw = _get(data, "packet", {}, defaults, "config")
    _require_keys(packet_raw, {"center", "width"}, "packet")
    profile_raw = _get(data, "profile", {}, defaults, "config")
    _require_keys(profile_raw, {"shape", "ramp_fraction"}, "profile")

    n_steps = _get(data, "n_steps", "auto", defaults, "config")
    if not (n_steps == "auto" or isinstance(n_steps, int)):
        raise ConfigError("n_steps must be an integer or 'auto'", field="n_steps")

    apparatus = _parse_apparatus(
        _get(data, "apparatus", {}, defaults, "config"), defaults
    )

    try:
        return MeasurementConfig(
            h_system=h_system,
            q_system=q_system,
            mode=_get(data, "mode", "protective", defaults, "config"),
            total_time=float(_get(data, "total_time", 50.0, defaults, "config")),
            n_steps=n_steps,
            pointer=pointer,
            packet_center=float(_get(packet_raw, "center", 0.0, defaults, "packet")),
            packet_width=float(_get(packet_raw, "width", 0.5, defaults, "packet")),
            apparatus=apparatus,
            eigenstate_index=int(_get(data, "eigenstate_index", 0, defaults, "config")),
            seed=int(_get(data, "seed", 0, defaults, "config")),
            profile_shape=_get(profile_raw, "shape", "sine-squared-ramp",
                               defaults, "profile"),
            ramp_fraction=float(_get(profile_raw, "ramp_fraction", 0.1,
                                     defaults, "profile")),
            tolerance=float(_get(data, "tolerance", 1e-8, defaults, "config")),
            applied_defaults=tuple(defaults),
        )
    except ProtmeasError:
        raise
    except Exception as exc:  # structural validation from the dataclasses
        raise ConfigError(str(exc), field=None) from exc


def _parse_coldatom(data: dict) -> ColdAtomParams:
    allowed = {
        "schema_version", "kind", "mass_kg", "magnetic_moment_j_per_t",
        "b_field_tesla", "b_gradient_t_per_m", "axis_prepare", "axis_measure",
        "packet_width_m", "interaction_length_m", "velocity_m_per_s",
        "drift_time_s",
    }
    _require_keys(data, allowed, "config")
    defaults: list[str] = []
    gradient = _get(data, "b_gradient_t_per_m", None, defaults, "config")
    try:
        return ColdAtomParams(
            mass=float(_get(data, "mass_kg", ColdAtomParams.mass, defaults, "config")),
            magnetic_moment=float(_get(data, "magnetic_moment_j_per_t",
                                       ColdAtomParams.magnetic_moment,
                                       defaults, "config")),
            b_field=float(_get(data, "b_field_tesla", ColdAtomParams.b_field,
                               defaults, "config")),
            b_gradient=None if gradient is None else float(gradient),
            axis_prepare=tuple(_get(data, "axis_prepare", [0.0, 0.0, 1.0],
                                    defaults, "config")),
            axis_measure=tuple(_get(data, "axis_measure", [0.0, 0.0, 1.0],
                                    defaults, "config")),
            packet_width=float(_get(data, "packet_width_m",
                                    ColdAtomParams.packet_width, defaults, "config")),
            interaction_length=float(_get(data, "interaction_length_m",
                                          ColdAtomParams.interaction_length,
                                          defaults, "config")),
            velocity=float(_get(data, "velocity_m_per_s", ColdAtomParams.velocity,
                                defaults, "config")),
            drift_time=float(_get(data, "drift_time_s", ColdAtomParams.drift_time,
                                  defaults, "config")),
        )
    except ProtmeasError:
        raise
    except Exception as exc:
        raise ConfigError(str(exc), field=None) from exc


def parse_config(path: str):
    """Load and validate a config file (measurement or cold-atom kind)."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise OutputError(f"cannot read config: {exc}", path=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", field=None) from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object", field=None)
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}",
                          field="schema_version")
    kind = data.get("kind", "measurement")
    if kind == "measurement":
        return _parse_measurement(data)
    if kind == "coldatom":
        return _parse_coldatom(data)
    raise ConfigError(f"unknown config kind {kind!r}", field="kind")


def _matrix_dict(m: np.ndarray) -> dict:
    return {"re": m.real.tolist(), "im": m.imag.tolist()}


def emit_config(config) -> dict:
    """Canonical dict form of a config, suitable for re-parsing."""
    if isinstance(config, MeasurementConfig):
        app = config.apparatus
        if app.h_kind == "zero":
            h_spec = "zero"
        elif app.h_kind == "kinetic":
            h_spec = {"kinetic": {"mass": app.mass}}
        else:
            h_spec = _matrix_dict(np.asarray(app.h_matrix))
        q_spec = "translation" if app.q_kind == "translation" else _matrix_dict(
            np.asarray(app.q_matrix)
        )
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "measurement",
            "mode": config.mode,
            "total_time": config.total_time,
            "n_steps": config.n_steps,
            "pointer": {
                "n_points": config.pointer.n_points,
                "r_min": config.pointer.r_min,
                "r_max": config.pointer.r_max,
            },
            "packet": {"center": config.packet_center, "width": config.packet_width},
            "system": {
                "h": _matrix_dict(np.asarray(config.h_system)),
                "q": _matrix_dict(np.asarray(config.q_system)),
            },
            "apparatus": {"h": h_spec, "q": q_spec},
            "eigenstate_index": config.eigenstate_index,
            "seed": config.seed,
            "profile": {
                "shape": config.profile_shape,
                "ramp_fraction": config.ramp_fraction,
            },
            "tolerance": config.tolerance,
        }
    if isinstance(config, ColdAtomParams):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "coldatom",
            "mass_kg": config.mass,
            "magnetic_moment_j_per_t": config.magnetic_moment,
            "b_field_tesla": config.b_field,
            "b_gradient_t_per_m": config.b_gradient,
            "axis_prepare": list(config.axis_prepare),
            "axis_measure": list(config.axis_measure),
            "packet_width_m": config.packet_width,
            "interaction_length_m": config.interaction_length,
            "velocity_m_per_s": config.velocity,
            "drift_time_s": config.drift_time,
        }
    raise ConfigError(f"cannot emit config of type {type(config).__name__}",
                      field=None)


def write_config(config, path: str):
    payload = json.dumps(emit_config(config), indent=2) + "\n"
    _write_text(path, payload)


# ---------------------------------------------------------------------------
# result emission


@dataclass(frozen=True)
class RunManifest:
    """Provenance record written alongside every result file."""

    schema_version: int
    created_utc: str
    package_version: str
    seed: int | None
    config: dict | None
    outputs: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "created_utc": self.created_utc,
            "package_version": self.package_version,
            "seed": self.seed,
            "config": self.config,
            "outputs": list(self.outputs),
        }

    @staticmethod
    def from_dict(data: dict) -> "RunManifest":
        return RunManifest(
            schema_version=data["schema_version"],
            created_utc=data["created_utc"],
            package_version=data["package_version"],
            seed=data["seed"],
            config=data["config"],
            outputs=tuple(data["outputs"]),
        )


def _fmt(x) -> str:
    if x is None:
        return "nan"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _csv_row(result: RunResult | None, t_value: float) -> str:
    if result is None:
        cells = [_fmt(t_value)] + ["nan"] * 6 + ["0"]
        return ",".join(cells)
    comp = compare_to_prediction(result)
    cells = [
        _fmt(result.total_time),
        _fmt(result.pointer_centroid),
        _fmt(result.predicted_shift),
        _fmt(comp.centroid_error),
        _fmt(result.disturbance),
        _fmt(result.entanglement_entropy),
        _fmt(result.validity),
        _fmt(result.report.n_steps),
    ]
    return ",".join(cells)


def _result_rows(result) -> list[str]:
    if isinstance(result, RunResult):
        return [_csv_row(result, result.total_time)]
    if isinstance(result, SweepResult):
        return [
            _csv_row(point, float(t))
            for t, point in zip(result.t_values, result.results)
        ]
    raise OutputError(f"cannot serialize {type(result).__name__}", path="")


def _json_sanitize(obj):
    if isinstance(obj, dict):
        return {k: _json_sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return None if math.isnan(x) or math.isinf(x) else x
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _json_sanitize(obj.tolist())
    return obj


def result_to_dict(result) -> dict:
    if isinstance(result, RunResult):
        return {"kind": "run", "run": result.to_dict()}
    if isinstance(result, SweepResult):
        return {
            "kind": "sweep",
            "t_values": result.t_values.tolist(),
            "disturbances": result.disturbances.tolist(),
            "entropies": result.entropies.tolist(),
            "centroid_errors": result.centroid_errors.tolist(),
            "validities": result.validities.tolist(),
            "fit": None if result.fit is None else {
                "slope": result.fit.slope,
                "intercept": result.fit.intercept,
                "r_squared": result.fit.r_squared,
                "window": list(result.fit.window),
            },
            "point_errors": list(result.point_errors),
            "points": [r.to_dict() if r else None for r in result.results],
        }
    raise OutputError(f"cannot serialize {type(result).__name__}", path="")


def load_result(path: str) -> RunResult:
    """Parse back a single-run JSON result file."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise OutputError(f"cannot read result: {exc}", path=str(path)) from exc
    if data.get("kind") != "run":
        raise ConfigError("not a single-run result file", field="kind")
    return RunResult.from_dict(data["run"])


def _write_text(path: str, payload: str):
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(payload)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}", path=str(path)) from exc


def emit_results(result, format: str, out_dir: str, basename: str = "results",
                 config=None, seed: int | None = None):
    """Write a result file plus its manifest; returns (paths, manifest).

    `format` selects csv or json for the data file.  The manifest always
    lands next to it as {basename}_manifest.json; timestamps live only in
    the manifest so the data file stays byte-reproducible.
    """
    if format not in ("csv", "json"):
        raise OutputError(f"unknown output format {format!r}", path=out_dir)
    data_path = os.path.join(out_dir, f"{basename}.{format}")
    if format == "csv":
        lines = [",".join(CSV_COLUMNS)] + _result_rows(result)
        payload = "\n".join(lines) + "\n"
    else:
        payload = json.dumps(_json_sanitize(result_to_dict(result)), indent=2) + "\n"
    _write_text(data_path, payload)

    if seed is None:
        seed = getattr(result, "seed", None)
        if seed is None and isinstance(result, SweepResult):
            seeds = [r.seed for r in result.results if r is not None]
            seed = seeds[0] if seeds else None
    manifest = RunManifest(
        schema_version=SCHEMA_VERSION,
        created_utc=_dt.datetime.now(_dt.timezone.utc).isoformat(),
        package_version=__version__,
        seed=seed,
        config=emit_config(config) if config is not None else None,
        outputs=(data_path,),
    )
    manifest_path = os.path.join(out_dir, f"{basename}_manifest.json")
    _write_text(manifest_path, json.dumps(manifest.to_dict(), indent=2) + "\n")
    return (data_path, manifest_path), manifest


def load_manifest(path: str) -> RunManifest:
    try:
        with open(path, encoding="utf-8") as fh:
            return RunManifest.from_dict(json.load(fh))
    except OSError as exc:
        raise OutputError(f"cannot read manifest: {exc}", path=str(path)) from exc
