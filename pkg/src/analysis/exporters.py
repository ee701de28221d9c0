import io
import logging
import math
import struct
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.analysis.errors import ConfigError  # noqa: E402
from src.analysis.tf_dataclasses import (  # noqa: E402
    ExponentEstimate,
    ExponentField,
    ExponentStatus,
    LeaderField,
    SampledSignal,
    ScaleGrid,
    SpectrumEstimate,
    TimeScalePlane,
)

logger = logging.getLogger(__name__)

PLANE_MAGIC = b"TSPL"
PLANE_VERSION = 2
PLANE_HASH_BYTES = 64
PLANE_HEADER = struct.Struct(f"<4sIIII{PLANE_HASH_BYTES}s")
SVG_HASH_SALT = "pleader-spectrum"


def _fmt(value) -> str:
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)


def _header(config_hash: str | None) -> list[str]:
    return [f"# config_sha256={config_hash}"] if config_hash else []


def _write_lines(path, lines: list[str]) -> Path:
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug(f"wrote {path}")
    return path


def _data_lines(path) -> list[str]:
    with open(path, "r", encoding="utf-8") as f:
        return [line.strip() for line in f if line.strip() and not line.startswith("#")]


def read_config_hash(path) -> str | None:
    """config_sha256 recorded in the first comment line of a CSV file, or in a plane dump header."""
    with open(path, "rb") as f:
        head = f.read(PLANE_HEADER.size)
    if head.startswith(PLANE_MAGIC):
        if len(head) < PLANE_HEADER.size:
            raise ConfigError(f"{path} is too short for a plane dump")
        raw = PLANE_HEADER.unpack(head)[-1].rstrip(b"\0")
        return raw.decode("ascii") if raw else None
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().strip()
    prefix = "# config_sha256="
    return first[len(prefix):] if first.startswith(prefix) else None


def write_signal_csv(path, signal: SampledSignal, config_hash: str | None = None) -> Path:
    lines = _header(config_hash) + ["x,value"]
    lines += [f"{_fmt(x)},{_fmt(v)}" for x, v in zip(signal.x.tolist(), signal.values.tolist())]
    return _write_lines(path, lines)


def read_signal_csv(path) -> SampledSignal:
    """Read a two-column x,value file on a uniform grid."""
    rows = [line for line in _data_lines(path) if line != "x,value"]
    if len(rows) < 2:
        raise ConfigError(f"{path} holds {len(rows)} samples, a signal needs at least 2")
    try:
        data = np.array([[float(v) for v in line.split(",")[:2]] for line in rows])
    except ValueError as e:
        raise ConfigError(f"{path} is not an x,value file: {e}") from e
    x, values = data[:, 0], data[:, 1]
    step = float(x[1] - x[0])
    if step <= 0 or np.max(np.abs(np.diff(x) - step)) > 1e-9 * max(step, np.abs(x).max()):
        raise ConfigError(f"{path} is not sampled on a uniform increasing grid")
    return SampledSignal(float(x[0]), step, values)


def write_plane_csv(path, plane: TimeScalePlane, config_hash: str | None = None) -> Path:
    """Header row of positions, then one row per scale with the scale first."""
    lines = _header(config_hash)
    lines.append("scale," + ",".join(_fmt(b) for b in plane.positions.tolist()))
    for a, row in zip(plane.scales.tolist(), plane.w.tolist()):
        lines.append(_fmt(a) + "," + ",".join(_fmt(v) for v in row))
    return _write_lines(path, lines)


def write_plane_binary(path, plane: TimeScalePlane, config_hash: str | None = None) -> Path:
    """
    Compact plane dump.

    Layout: "TSPL", version, n_scales, n_positions, scales_per_octave (uint32),
    config_sha256 as 64 ASCII bytes (zero bytes when absent), reference amplitude, scales, positions, row-major w (little-endian f8),
    then the validity mask as uint8.
    """
    hash_field = (config_hash or "").encode("ascii")
    if len(hash_field) not in (0, PLANE_HASH_BYTES):
        raise ConfigError(f"config hash must be {PLANE_HASH_BYTES} hex characters, got {len(hash_field)}")
    n_scales, n_positions = plane.w.shape
    buf = io.BytesIO()
    buf.write(
        PLANE_HEADER.pack(
            PLANE_MAGIC, PLANE_VERSION, n_scales, n_positions, plane.scale_grid.scales_per_octave, hash_field
        )
    )
    buf.write(struct.pack("<d", plane.reference_amplitude))
    for arr in (plane.scales, plane.positions, plane.w):
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(plane.valid, dtype=np.uint8).tobytes())
    path = Path(path)
    path.write_bytes(buf.getvalue())
    return path


def read_plane_binary(path) -> TimeScalePlane:
    data = Path(path).read_bytes()
    if len(data) < PLANE_HEADER.size + 8:
        raise ConfigError(f"{path} is too short for a plane dump")
    magic, version, n_scales, n_positions, spo, _ = PLANE_HEADER.unpack_from(data, 0)
    if magic != PLANE_MAGIC:
        raise ConfigError(f"{path} does not start with {PLANE_MAGIC!r}")
    if version != PLANE_VERSION:
        raise ConfigError(f"{path} has plane format version {version}, expected {PLANE_VERSION}")
    offset = PLANE_HEADER.size
    (reference,) = struct.unpack_from("<d", data, offset)
    offset += 8

    def take(count: int, dtype: str) -> np.ndarray:
        nonlocal offset
        size = count * np.dtype(dtype).itemsize
        if offset + size > len(data):
            raise ConfigError(f"{path} is truncated")
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
        offset += size
        return arr

    scales = take(n_scales, "<f8")
    positions = take(n_positions, "<f8")
    w = take(n_scales * n_positions, "<f8").reshape(n_scales, n_positions)
    valid = take(n_scales * n_positions, "u1").reshape(n_scales, n_positions).astype(bool)
    return TimeScalePlane(ScaleGrid(scales, spo), positions, w, valid, reference)


def write_leader_csv(path, leaders: LeaderField, config_hash: str | None = None) -> Path:
    lines = _header(config_hash) + ["a,b,L,valid"]
    positions = leaders.positions.tolist()
    for a, values, valid in zip(leaders.anchors.tolist(), leaders.values.tolist(), leaders.valid.tolist()):
        lines += [f"{_fmt(a)},{_fmt(b)},{_fmt(v)},{int(ok)}" for b, v, ok in zip(positions, values, valid)]
    return _write_lines(path, lines)


EXPONENT_COLUMNS = "x0,p,slope,residual,n_scales,intercept,a_min,a_max,n_zeros,status"


def write_exponent_csv(path, field: ExponentField, config_hash: str | None = None) -> Path:
    lines = _header(config_hash) + [EXPONENT_COLUMNS]
    for e in field.estimates:
        lines.append(
            ",".join(
                [
                    _fmt(e.x0), _fmt(e.p), _fmt(e.slope), _fmt(e.residual), str(e.num_scales),
                    _fmt(e.intercept), _fmt(e.scale_range[0]), _fmt(e.scale_range[1]),
                    str(e.num_zeros), e.status.value,
                ]
            )
        )
    return _write_lines(path, lines)


def read_exponent_csv(path) -> ExponentField:
    rows = [line.split(",") for line in _data_lines(path) if line != EXPONENT_COLUMNS]
    if not rows:
        raise ConfigError(f"{path} holds no exponent estimates")
    try:
        estimates = [
            ExponentEstimate(
                x0=float(r[0]),
                p=float(r[1]),
                slope=float(r[2]),
                intercept=float(r[5]),
                scale_range=(float(r[6]), float(r[7])),
                residual=float(r[3]),
                num_scales=int(r[4]),
                num_zeros=int(r[8]),
                status=ExponentStatus(r[9]),
            )
            for r in rows
        ]
    except (ValueError, IndexError) as e:
        raise ConfigError(f"{path} is not an exponent-field file: {e}") from e
    positions = np.array([e.x0 for e in estimates])
    return ExponentField(positions, tuple(estimates), estimates[0].p)


def write_spectrum_csv(path, estimate: SpectrumEstimate, theoretical=None, config_hash: str | None = None) -> Path:
    """Rows (h_center, count, dim, theoretical_dim); theoretical_dim is nan when no theory applies."""
    theory = np.full(len(estimate.counts), math.nan) if theoretical is None else np.asarray(theoretical, dtype=float)
    lines = _header(config_hash) + ["h_center,count,dim,theoretical_dim"]
    for h, count, dim, t in zip(estimate.centers.tolist(), estimate.counts.tolist(), estimate.dims.tolist(), theory.tolist()):
        lines.append(f"{_fmt(h)},{count},{_fmt(dim)},{_fmt(t) if not math.isnan(t) else 'nan'}")
    return _write_lines(path, lines)


def write_spectrum_svg(
    path,
    estimate: SpectrumEstimate,
    theory_curve: tuple[np.ndarray, np.ndarray] | None = None,
    title: str = "",
    config_hash: str | None = None,
) -> Path:
    """Estimated spectrum with an optional theoretical overlay, as a self-contained SVG."""
    plt.rcParams["svg.hashsalt"] = SVG_HASH_SALT
    fig, ax = plt.subplots(figsize=(6, 4))
    mask = estimate.nonempty
    ax.plot(estimate.centers[mask], estimate.dims[mask], "o-", label="estimated", markersize=3)
    if theory_curve is not None:
        h, d = theory_curve
        ax.plot(h, d, "-", label="theoretical")
    ax.set_xlabel("h")
    ax.set_ylabel("D(h)")
    ax.set_ylim(-0.05, 1.1)
    if title:
        ax.set_title(title)
    ax.legend()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)

    svg = buf.getvalue()
    if config_hash:
        first_break = svg.index("\n") + 1
        svg = svg[:first_break] + f"<!-- config_sha256={config_hash} -->\n" + svg[first_break:]
    path = Path(path)
    path.write_text(svg, encoding="utf-8")
    return path
