"""
Experiment files: YAML configs in, CSV tables and JSON sidecars out.

Every CSV starts with ``# key=value`` comment lines (the first is always the
config hash), then a header row, then one row per record. Floats use the
configured format (17 significant digits by default) so re-running a config
reproduces the files byte for byte.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import yaml
from numpy.typing import NDArray
from pydantic import BaseModel, TypeAdapter, ValidationError

from wave_enclosure.core.config import get_settings
from wave_enclosure.core.error_codes import ErrorCode, ExitCode
from wave_enclosure.core.errors import EnclosureError
from wave_enclosure.core.hashing import canonical_json, format_float
from wave_enclosure.schemas.experiment import ExperimentConfig
from wave_enclosure.schemas.forward import GridSpec
from wave_enclosure.schemas.medium import Background
from wave_enclosure.schemas.results import IndicatorSeries, ProbeResult, TraceMetadata
from wave_enclosure.services.forward import TraceSet

logger = logging.getLogger(__name__)

_background_adapter = TypeAdapter(Background)


def _invalid_config(message: str, **detail) -> EnclosureError:
    return EnclosureError(
        exit_code=ExitCode.INVALID_INPUT, code=ErrorCode.INVALID_CONFIG, message=message, detail=detail
    )


def _malformed(path: Path, reason: str) -> EnclosureError:
    return EnclosureError(
        exit_code=ExitCode.INVALID_INPUT,
        code=ErrorCode.MALFORMED_INPUT,
        message=f"{path}: {reason}",
    )


def load_experiment(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise _invalid_config(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise _invalid_config(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise _invalid_config(f"config {path} must be a mapping of sections")
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        errors = [f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors()]
        raise _invalid_config(f"config {path} failed validation: {'; '.join(errors)}", errors=errors) from exc
    logger.info("Loaded config %s (hash %s)", path, config.digest()[:12])
    return config


def _fmt(value: float) -> str:
    return format_float(value, get_settings().float_format)


def _write_table(
    path: Path, meta: dict[str, str], header: list[str], rows: NDArray[np.float64] | list[list[str]]
) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {key}={value}" for key, value in meta.items()]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug("Wrote %s (%d rows)", path, len(rows))
    return path


def _read_table(path: Path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise _malformed(path, f"cannot read: {exc}") from exc
    meta: dict[str, str] = {}
    body: list[str] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#") and not body:
            key, sep, value = line[1:].strip().partition("=")
            if not sep:
                raise _malformed(path, f"comment line without key=value: {line!r}")
            meta[key.strip()] = value.strip()
        else:
            body.append(line)
    if not body:
        raise _malformed(path, "missing header row")
    header = body[0].split(",")
    rows = [line.split(",") for line in body[1:]]
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise _malformed(path, f"row {i + 1} has {len(row)} fields, header has {len(header)}")
    return meta, header, rows


def _float_rows(path: Path, rows: list[list[str]]) -> NDArray[np.float64]:
    try:
        return np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
    except ValueError as exc:
        raise _malformed(path, f"non-numeric field: {exc}") from exc


def _require(path: Path, header: list[str], expected: list[str]) -> None:
    if header[: len(expected)] != expected:
        raise _malformed(path, f"expected columns {expected}, found {header}")


def write_traces(path: str | Path, trace: TraceSet, config_hash: str) -> Path:
    header = ["t"] + [f"node_{q}" for q in range(len(trace.nodes))]
    rows = np.column_stack([trace.times, trace.values])
    return _write_table(Path(path), {"config_hash": config_hash}, header, rows)


def read_traces(path: str | Path) -> tuple[NDArray[np.float64], NDArray[np.float64], dict[str, str]]:
    path = Path(path)
    meta, header, rows = _read_table(path)
    _require(path, header, ["t"])
    table = _float_rows(path, rows)
    if table.shape[0] < 2 or table.shape[1] < 2:
        raise _malformed(path, "trace table needs at least two times and one node")
    return table[:, 0], table[:, 1:], meta


def write_trace_metadata(path: str | Path, trace: TraceSet, grid: GridSpec, config_hash: str) -> Path:
    meta = TraceMetadata(
        config_hash=config_hash,
        grid=grid,
        nodes=[tuple(float(c) for c in node) for node in trace.nodes.nodes],
        weights=[float(w) for w in trace.nodes.weights],
        energy=None if trace.energy is None else [float(e) for e in trace.energy],
    )
    return write_json(path, meta)


def write_series(path: str | Path, series: IndicatorSeries) -> Path:
    meta = {
        "config_hash": series.config_hash,
        "variant": series.variant,
        "T": _fmt(series.T),
        "monotonicity": series.monotonicity or "none",
    }
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(np.asarray(series.values)))
    rows = np.column_stack([series.taus, series.values, logs])
    return _write_table(Path(path), meta, ["tau", "I", "log_abs_I"], rows)


def read_series(path: str | Path) -> IndicatorSeries:
    path = Path(path)
    meta, header, rows = _read_table(path)
    _require(path, header, ["tau", "I"])
    table = _float_rows(path, rows)
    if table.shape[0] < 2:
        raise _malformed(path, "series needs at least two rows")
    tag = meta.get("monotonicity", "none")
    try:
        return IndicatorSeries(
            taus=table[:, 0].tolist(),
            values=table[:, 1].tolist(),
            T=float(meta.get("T", "nan")),
            variant=meta.get("variant", "standard"),
            config_hash=meta.get("config_hash", ""),
            monotonicity=None if tag == "none" else tag,
        )
    except (ValidationError, ValueError) as exc:
        raise _malformed(path, f"invalid series: {exc}") from exc


def write_points(path: str | Path, points: NDArray[np.float64], config_hash: str) -> Path:
    return _write_table(Path(path), {"config_hash": config_hash}, ["x1", "x2", "x3"], np.asarray(points))


def read_points(path: str | Path) -> NDArray[np.float64]:
    path = Path(path)
    _, header, rows = _read_table(path)
    _require(path, header, ["x1", "x2", "x3"])
    return _float_rows(path, rows).reshape(-1, 3)


def write_probes(path: str | Path, probes: list[ProbeResult], background: Background, config_hash: str) -> Path:
    meta = {"config_hash": config_hash, "background": canonical_json(background)}
    rows = np.array([[*p.p, p.r, p.L_hat] for p in probes], dtype=np.float64).reshape(-1, 5)
    return _write_table(Path(path), meta, ["p1", "p2", "p3", "r", "L_hat"], rows)


def read_probes(path: str | Path) -> tuple[list[ProbeResult], Background]:
    path = Path(path)
    meta, header, rows = _read_table(path)
    _require(path, header, ["p1", "p2", "p3", "r", "L_hat"])
    table = _float_rows(path, rows)
    try:
        background = _background_adapter.validate_json(meta.get("background", '{"kind":"homogeneous"}'))
        variant = "two_layer" if background.kind == "two_layer" else "homogeneous"
        probes = [
            ProbeResult(p=(row[0], row[1], row[2]), r=row[3], L_hat=row[4], variant=variant) for row in table
        ]
    except ValidationError as exc:
        raise _malformed(path, f"invalid probe record: {exc}") from exc
    if not probes:
        raise _malformed(path, "no probe rows")
    return probes, background


def write_json(path: str | Path, model: BaseModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path
