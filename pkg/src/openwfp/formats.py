"""Binary and CSV artifact formats for fields, ensembles, and tables.

Two little-endian binary containers are defined here.  Grid dumps carry a
phase-space field on a rectangular grid:

    magic b"WFG1" | u32 version | u32 N_x | u32 N_xi |
    f64 x_first | f64 x_last | f64 xi_first | f64 xi_last | f64 time |
    N_x * N_xi f64 values, row-major (x index slow, xi index fast)

Ensemble snapshots carry the full packet population plus the coefficients
needed to keep evolving or reconstructing it:

    magic b"WFE1" | u32 version | u32 dim | u32 channels | u32 shape_rows |
    u64 M | f64 epsilon | f64 time |
    channels f64 alpha | channels f64 beta | channels c16 gamma |
    channels f64 mu | u8 has_init [| 2n f64 mean | (2n)^2 f64 cov] |
    M*n f64 q | M*n f64 p | shape_rows*(2n)^2 f64 G | shape_rows f64 A

shape_rows is 1 when every packet shares one (G, A) pair and M otherwise,
mirroring the in-memory layout.  All writers are deterministic: the same
object always produces the same bytes.

CSV tables print floats with 9 significant digits and use "\n" line
endings so reruns compare byte-for-byte.
"""

from __future__ import annotations

import struct

import numpy as np

from .core import DissipationParams, GaussianState, ValidationError
from .sampling import PacketEnsemble, WignerField

GRID_MAGIC = b"WFG1"
ENSEMBLE_MAGIC = b"WFE1"
FORMAT_VERSION = 1

_F8 = np.dtype("<f8")
_C16 = np.dtype("<c16")


def format_float(x) -> str:
    """Render one number with 9 significant digits (integers stay exact)."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.9g" % float(x)


def write_table_csv(path, header, rows):
    """Write a CSV table deterministically.

    header is a sequence of column names; each row is a sequence of numbers
    or strings.  Floats are formatted via format_float.
    """
    lines = [",".join(str(h) for h in header)]
    for row in rows:
        cells = []
        for value in row:
            if isinstance(value, str):
                cells.append(value)
            else:
                cells.append(format_float(value))
        lines.append(",".join(cells))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_table_csv(path):
    """Read a CSV written by write_table_csv; returns (header, rows of str)."""
    with open(path, "r", newline="") as fh:
        raw = [line.rstrip("\n") for line in fh if line.strip()]
    if not raw:
        raise ValidationError(f"empty CSV table: {path}")
    header = raw[0].split(",")
    rows = [line.split(",") for line in raw[1:]]
    for row in rows:
        if len(row) != len(header):
            raise ValidationError(f"ragged CSV row in {path}: {row}")
    return header, rows


# ---------------------------------------------------------------------------
# grid dumps


def write_grid_dump(path, field: WignerField):
    """Serialize a 1D-in-space field (2D grid) to the binary dump format."""
    if len(field.grid) != 2:
        raise ValidationError("grid dumps hold exactly two axes (x, xi)")
    (xa, xb, nx), (va, vb, nv) = field.grid
    header = struct.pack(
        "<4sIIIddddd", GRID_MAGIC, FORMAT_VERSION, nx, nv,
        xa, xb, va, vb, float(field.time))
    payload = np.ascontiguousarray(field.values, dtype=_F8).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_grid_dump(path) -> WignerField:
    """Read a binary grid dump back into a field object."""
    header_size = struct.calcsize("<4sIIIddddd")
    with open(path, "rb") as fh:
        head = fh.read(header_size)
        if len(head) < header_size:
            raise ValidationError(f"truncated grid dump header: {path}")
        magic, version, nx, nv, xa, xb, va, vb, time = struct.unpack(
            "<4sIIIddddd", head)
        if magic != GRID_MAGIC:
            raise ValidationError(
                f"not a grid dump (bad magic {magic!r}): {path}")
        if version != FORMAT_VERSION:
            raise ValidationError(
                f"unsupported grid dump version {version}: {path}")
        payload = fh.read(nx * nv * 8)
    if len(payload) != nx * nv * 8:
        raise ValidationError(f"truncated grid dump payload: {path}")
    values = np.frombuffer(payload, dtype=_F8).reshape(nx, nv).copy()
    return WignerField(grid=((xa, xb, nx), (va, vb, nv)), values=values,
                       time=time)


def write_grid_csv(path, field: WignerField):
    """Sidecar CSV for plotting tools: one (x, xi, value) row per node."""
    if len(field.grid) != 2:
        raise ValidationError("grid CSV export holds exactly two axes")
    xs, vs = field.axes
    rows = []
    for i, x in enumerate(xs):
        for j, v in enumerate(vs):
            rows.append((x, v, field.values[i, j]))
    write_table_csv(path, ("x", "xi", "value"), rows)


# ---------------------------------------------------------------------------
# ensemble snapshots


def write_ensemble_snapshot(path, ens: PacketEnsemble):
    """Serialize a packet ensemble, its parameters, and (if known) its
    initial profile."""
    n = ens.dim
    params = ens.params
    channels = params.alpha.shape[0]
    shape_rows = ens.G.shape[0]
    m = len(ens)
    head = struct.pack(
        "<4sIIIIQdd", ENSEMBLE_MAGIC, FORMAT_VERSION, n, channels,
        shape_rows, m, params.epsilon, ens.t)
    chunks = [head,
              np.ascontiguousarray(params.alpha, dtype=_F8).tobytes(),
              np.ascontiguousarray(params.beta, dtype=_F8).tobytes(),
              np.ascontiguousarray(params.gamma, dtype=_C16).tobytes(),
              np.ascontiguousarray(params.mu, dtype=_F8).tobytes()]
    if ens.init is not None:
        chunks.append(struct.pack("<B", 1))
        chunks.append(np.ascontiguousarray(ens.init.mean, dtype=_F8).tobytes())
        chunks.append(np.ascontiguousarray(ens.init.cov, dtype=_F8).tobytes())
    else:
        chunks.append(struct.pack("<B", 0))
    chunks.append(np.ascontiguousarray(ens.q, dtype=_F8).tobytes())
    chunks.append(np.ascontiguousarray(ens.p, dtype=_F8).tobytes())
    chunks.append(np.ascontiguousarray(ens.G, dtype=_F8).tobytes())
    chunks.append(np.ascontiguousarray(ens.A, dtype=_F8).tobytes())
    with open(path, "wb") as fh:
        for chunk in chunks:
            fh.write(chunk)


def _read_exact(fh, count, path, what):
    data = fh.read(count)
    if len(data) != count:
        raise ValidationError(f"truncated ensemble snapshot ({what}): {path}")
    return data


def read_ensemble_snapshot(path) -> PacketEnsemble:
    """Read a snapshot back into an ensemble (sampling settings are not
    stored; the field comes back None)."""
    head_fmt = "<4sIIIIQdd"
    head_size = struct.calcsize(head_fmt)
    with open(path, "rb") as fh:
        head = _read_exact(fh, head_size, path, "header")
        (magic, version, n, channels, shape_rows, m, epsilon,
         time) = struct.unpack(head_fmt, head)
        if magic != ENSEMBLE_MAGIC:
            raise ValidationError(
                f"not an ensemble snapshot (bad magic {magic!r}): {path}")
        if version != FORMAT_VERSION:
            raise ValidationError(
                f"unsupported snapshot version {version}: {path}")
        alpha = np.frombuffer(
            _read_exact(fh, channels * 8, path, "alpha"), dtype=_F8).copy()
        beta = np.frombuffer(
            _read_exact(fh, channels * 8, path, "beta"), dtype=_F8).copy()
        gamma = np.frombuffer(
            _read_exact(fh, channels * 16, path, "gamma"), dtype=_C16).copy()
        mu = np.frombuffer(
            _read_exact(fh, channels * 8, path, "mu"), dtype=_F8).copy()
        (has_init,) = struct.unpack("<B", _read_exact(fh, 1, path, "flags"))
        init = None
        if has_init:
            mean = np.frombuffer(
                _read_exact(fh, 2 * n * 8, path, "mean"), dtype=_F8).copy()
            cov = np.frombuffer(
                _read_exact(fh, (2 * n) ** 2 * 8, path, "cov"),
                dtype=_F8).copy().reshape(2 * n, 2 * n)
            init = GaussianState(dim=n, mean=mean, cov=cov)
        q = np.frombuffer(
            _read_exact(fh, m * n * 8, path, "q"), dtype=_F8).copy()
        p = np.frombuffer(
            _read_exact(fh, m * n * 8, path, "p"), dtype=_F8).copy()
        g = np.frombuffer(
            _read_exact(fh, shape_rows * (2 * n) ** 2 * 8, path, "G"),
            dtype=_F8).copy()
        a = np.frombuffer(
            _read_exact(fh, shape_rows * 8, path, "A"), dtype=_F8).copy()
    params = DissipationParams(dim=n, epsilon=epsilon, alpha=alpha,
                               beta=beta, gamma=gamma, mu=mu)
    return PacketEnsemble(
        dim=n, params=params, q=q.reshape(m, n), p=p.reshape(m, n),
        G=g.reshape(shape_rows, 2 * n, 2 * n), A=a, t=time, init=init)
