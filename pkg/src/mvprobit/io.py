"""Bit-stable text persistence for datasets, summaries, plans, and truths.

Every file written here starts with a ``#mvprobit-<kind> v<major>`` line
and readers reject unknown majors.  Floats are formatted with 17
significant digits so that save -> load round-trips reproduce the exact
double, which is what makes "fit on one machine, combine on another"
byte-equivalent to a local run.  Raw draws are the only bulk payload and
go to a little-endian binary sidecar next to the summary file.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .combine import CombinedPosterior
from .errors import (
    DatasetFormatError,
    DigestMismatchError,
    EmptyInputError,
    FileFormatError,
    TruncatedFileError,
)
from .model import Dataset, ModelConfig, PosteriorSummary
from .sharding import ShardPlan
from .simlab import SimTruth

TOOL_VERSION = "0.1.0"

_DRAWS_MAGIC = b"MVPDRAWS"


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def _fmt_list(values) -> str:
    return ",".join(_fmt(v) for v in values)


def _check_names(names: list[str]):
    for name in names:
        if "," in name or "\n" in name or "\t" in name:
            raise DatasetFormatError(f"name {name!r} contains a reserved character")


def _read_lines(path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    return text.splitlines()


def _parse_version_line(line: str, kind: str) -> int:
    prefix = f"#mvprobit-{kind} v"
    if not line.startswith(prefix):
        raise FileFormatError(
            f"expected a '#mvprobit-{kind} v<major>' version line, got {line[:40]!r}"
        )
    try:
        major = int(line[len(prefix):].strip().split(".")[0])
    except ValueError as exc:
        raise FileFormatError(f"unparseable version in {line!r}") from exc
    if major != 1:
        raise FileFormatError(f"unsupported {kind} format major version {major}")
    return major


def _header_block(lines: list[str], start: int) -> tuple[dict[str, str], int]:
    """Read '#key value' lines; returns the mapping and the next index."""
    header: dict[str, str] = {}
    i = start
    while i < len(lines) and lines[i].startswith("#"):
        body = lines[i][1:]
        key, _, value = body.partition(" ")
        header[key] = value
        i += 1
    return header, i


# ---------------------------------------------------------------------------
# datasets


def save_dataset(data: Dataset, path) -> None:
    _check_names(data.response_names)
    _check_names(data.predictor_names)
    cols = [f"y:{n}" for n in data.response_names]
    cols += [f"x:{n}" for n in data.predictor_names]
    lines = ["#mvprobit-dataset v1", ",".join(cols)]
    for i in range(data.n):
        row = [str(int(v)) for v in data.Y[i]]
        row += [_fmt(v) for v in data.X[i]]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dataset(path) -> Dataset:
    """Parse a delimited dataset with 'y:'/'x:'-prefixed header columns.

    The version comment is optional on input so externally produced
    files load too.  Responses must be exactly 0/1; predictors must be
    finite; every violation is reported with its row and column.
    """
    lines = [ln for ln in _read_lines(path) if not ln.startswith("#")]
    lines = [ln for ln in lines if ln.strip() != ""]
    if not lines:
        raise EmptyInputError(f"dataset file {path} contains no data")

    header = [c.strip() for c in lines[0].split(",")]
    y_cols: list[tuple[int, str]] = []
    x_cols: list[tuple[int, str]] = []
    for idx, col in enumerate(header):
        if col.startswith("y:"):
            y_cols.append((idx, col[2:]))
        elif col.startswith("x:"):
            x_cols.append((idx, col[2:]))
        else:
            raise DatasetFormatError(
                f"header column {col!r} lacks a 'y:' or 'x:' prefix"
            )
    if not y_cols or not x_cols:
        raise DatasetFormatError(
            "header must declare at least one response and one predictor column"
        )

    n_rows = len(lines) - 1
    if n_rows == 0:
        raise EmptyInputError(f"dataset file {path} has a header but no rows")
    y = np.empty((n_rows, len(y_cols)), dtype=np.int8)
    x = np.empty((n_rows, len(x_cols)), dtype=float)

    for r, line in enumerate(lines[1:], start=1):
        cells = line.split(",")
        if len(cells) != len(header):
            raise DatasetFormatError(
                f"row {r} has {len(cells)} cells, header has {len(header)}"
            )
        for j, (idx, name) in enumerate(y_cols):
            token = cells[idx].strip()
            if token == "":
                raise DatasetFormatError(f"missing value at row {r}, column y:{name}")
            try:
                value = float(token)
            except ValueError:
                raise DatasetFormatError(
                    f"unparseable response {token!r} at row {r}, column y:{name}"
                ) from None
            if value not in (0.0, 1.0):
                raise DatasetFormatError(
                    f"non-binary response {token!r} at row {r}, column y:{name}"
                )
            y[r - 1, j] = int(value)
        for j, (idx, name) in enumerate(x_cols):
            token = cells[idx].strip()
            if token == "":
                raise DatasetFormatError(f"missing value at row {r}, column x:{name}")
            try:
                value = float(token)
            except ValueError:
                raise DatasetFormatError(
                    f"unparseable predictor {token!r} at row {r}, column x:{name}"
                ) from None
            if not np.isfinite(value):
                raise DatasetFormatError(
                    f"non-finite predictor at row {r}, column x:{name}"
                )
            x[r - 1, j] = value

    return Dataset(
        y, x,
        response_names=[n for _, n in y_cols],
        predictor_names=[n for _, n in x_cols],
    )


# ---------------------------------------------------------------------------
# posterior summaries


def _draws_sidecar_path(path) -> Path:
    return Path(str(path) + ".draws")


def _write_draws(path, draws: np.ndarray) -> None:
    n_params, n_kept = draws.shape
    payload = draws.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(_DRAWS_MAGIC)
        fh.write(struct.pack("<BB", 1, ord("<")))
        fh.write(struct.pack("<QQ", n_params, n_kept))
        fh.write(payload)


def _read_draws(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    head = len(_DRAWS_MAGIC) + 2 + 16
    if len(raw) < head:
        raise TruncatedFileError(f"draw sidecar {path} is truncated")
    if raw[: len(_DRAWS_MAGIC)] != _DRAWS_MAGIC:
        raise FileFormatError(f"{path} is not a draw sidecar")
    version, endian = struct.unpack_from("<BB", raw, len(_DRAWS_MAGIC))
    if version != 1:
        raise FileFormatError(f"unsupported draw sidecar version {version}")
    if endian != ord("<"):
        raise FileFormatError("draw sidecar declares an unsupported byte order")
    n_params, n_kept = struct.unpack_from("<QQ", raw, len(_DRAWS_MAGIC) + 2)
    expected = head + 8 * n_params * n_kept
    if len(raw) != expected:
        raise TruncatedFileError(
            f"draw sidecar {path}: expected {expected} bytes, found {len(raw)}"
        )
    return (
        np.frombuffer(raw, dtype="<f8", offset=head)
        .reshape(n_params, n_kept)
        .astype(float)
    )


def save_summary(summary: PosteriorSummary | CombinedPosterior, path) -> None:
    """Persist a chain or combined summary (draws go to a sidecar)."""
    combined = isinstance(summary, CombinedPosterior)
    kind = summary.method if combined else "chain"
    lines = ["#mvprobit-summary v1", f"#kind {kind}"]
    if combined:
        lines.append(f"#n_shards {summary.n_shards}")
    else:
        lines.append(f"#n_kept {summary.n_kept}")
        if summary.epsilon is not None:
            lines.append(f"#epsilon {_fmt(summary.epsilon)}")
    lines.append(f"#grid {_fmt_list(summary.quantile_grid)}")
    if summary.response_names:
        _check_names(summary.response_names)
        lines.append("#responses " + ",".join(summary.response_names))
    if summary.predictor_names:
        _check_names(summary.predictor_names)
        lines.append("#predictors " + ",".join(summary.predictor_names))
    has_draws = summary.draws is not None
    lines.append(f"#draws {'sidecar' if has_draws else 'none'}")

    lines.append(
        "parameter," + ",".join(f"q{_fmt(q)}" for q in summary.quantile_grid)
    )
    for name, row in zip(summary.parameter_names, summary.quantiles):
        lines.append(name + "," + _fmt_list(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if has_draws:
        _write_draws(_draws_sidecar_path(path), summary.draws)


def load_summary(path) -> PosteriorSummary | CombinedPosterior:
    lines = _read_lines(path)
    if not lines:
        raise EmptyInputError(f"summary file {path} is empty")
    _parse_version_line(lines[0], "summary")
    header, i = _header_block(lines, 1)

    kind = header.get("kind")
    if kind not in ("chain", "cmc", "pie"):
        raise FileFormatError(f"summary {path} has unknown kind {kind!r}")
    grid = np.array([float(t) for t in header["grid"].split(",")])
    responses = header.get("responses")
    predictors = header.get("predictors")
    response_names = responses.split(",") if responses else None
    predictor_names = predictors.split(",") if predictors else None

    if i >= len(lines) or not lines[i].startswith("parameter,"):
        raise FileFormatError(f"summary {path} lacks its table header row")
    names = []
    table = []
    n_levels = len(grid)
    for line in lines[i + 1 :]:
        if line.strip() == "":
            continue
        # Parameter names contain commas ("b[1,1]"): the last n_levels
        # cells are the numbers, the rest rejoin into the name.
        cells = line.split(",")
        if len(cells) < 1 + n_levels:
            raise TruncatedFileError(
                f"summary {path}: table row has {len(cells)} cells, "
                f"expected at least {1 + n_levels}"
            )
        names.append(",".join(cells[:-n_levels]))
        try:
            table.append([float(t) for t in cells[-n_levels:]])
        except ValueError as exc:
            raise TruncatedFileError(
                f"summary {path}: unparseable table row {line[:40]!r}"
            ) from exc
    if not names:
        raise TruncatedFileError(f"summary {path} has no parameter rows")
    quantiles = np.array(table)

    draws = None
    if header.get("draws") == "sidecar":
        sidecar = _draws_sidecar_path(path)
        if not sidecar.exists():
            raise TruncatedFileError(
                f"summary {path} declares a draw sidecar but {sidecar} is missing"
            )
        draws = _read_draws(sidecar)
        if draws.shape[0] != len(names):
            raise TruncatedFileError(
                f"draw sidecar row count {draws.shape[0]} != {len(names)} parameters"
            )

    if kind == "chain":
        epsilon = float(header["epsilon"]) if "epsilon" in header else None
        return PosteriorSummary(
            parameter_names=names,
            quantile_grid=grid,
            quantiles=quantiles,
            n_kept=int(header.get("n_kept", draws.shape[1] if draws is not None else 0)),
            draws=draws,
            epsilon=epsilon,
            response_names=response_names,
            predictor_names=predictor_names,
        )
    return CombinedPosterior(
        method=kind,
        parameter_names=names,
        quantile_grid=grid,
        quantiles=quantiles,
        n_shards=int(header.get("n_shards", 0)),
        draws=draws,
        response_names=response_names,
        predictor_names=predictor_names,
    )


# ---------------------------------------------------------------------------
# shard plans


def save_plan(plan: ShardPlan, path) -> None:
    lines = [
        "#mvprobit-plan v1",
        f"#n {plan.n}",
        f"#n_shards {plan.n_shards}",
        f"#seed {plan.seed}",
        f"#mode {plan.mode}",
        "#sizes " + ",".join(str(int(s)) for s in plan.shard_sizes),
        "#epsilons " + _fmt_list(plan.epsilons),
        "assignment",
    ]
    lines += [str(int(a)) for a in plan.assignments]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_plan(path) -> ShardPlan:
    lines = _read_lines(path)
    if not lines:
        raise EmptyInputError(f"plan file {path} is empty")
    _parse_version_line(lines[0], "plan")
    header, i = _header_block(lines, 1)
    if i >= len(lines) or lines[i] != "assignment":
        raise FileFormatError(f"plan {path} lacks its assignment column")
    assignments = np.array([int(t) for t in lines[i + 1 :] if t.strip() != ""])
    n = int(header["n"])
    if assignments.shape[0] != n:
        raise TruncatedFileError(
            f"plan {path}: expected {n} assignments, found {assignments.shape[0]}"
        )
    sizes = np.array([int(t) for t in header["sizes"].split(",")])
    counts = np.bincount(assignments, minlength=len(sizes))
    if not np.array_equal(counts, sizes):
        raise FileFormatError(f"plan {path}: assignments disagree with recorded sizes")
    return ShardPlan(
        assignments=assignments,
        shard_sizes=sizes,
        epsilons=np.array([float(t) for t in header["epsilons"].split(",")]),
        seed=int(header["seed"]),
        mode=header.get("mode", "by_count"),
    )


# ---------------------------------------------------------------------------
# simulation truths


def _matrix_lines(tag: str, matrix: np.ndarray) -> list[str]:
    lines = [f"#{tag} {matrix.shape[0]}x{matrix.shape[1]}"]
    lines += [_fmt_list(row) for row in np.atleast_2d(matrix)]
    return lines


def save_truth(truth: SimTruth, path) -> None:
    lines = ["#mvprobit-truth v1"]
    lines += _matrix_lines("B_true", truth.B_true)
    lines += _matrix_lines("R_true", truth.R_true)
    if truth.unidentified_B is not None:
        lines += _matrix_lines("gen_B", truth.unidentified_B)
    if truth.unidentified_Theta is not None:
        lines += _matrix_lines("gen_Theta", truth.unidentified_Theta)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_truth(path) -> SimTruth:
    lines = _read_lines(path)
    if not lines:
        raise EmptyInputError(f"truth file {path} is empty")
    _parse_version_line(lines[0], "truth")
    matrices: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if not line.startswith("#"):
            raise FileFormatError(f"truth {path}: unexpected line {line!r}")
        tag, _, shape = line[1:].partition(" ")
        try:
            rows, cols = (int(t) for t in shape.split("x"))
        except ValueError as exc:
            raise FileFormatError(f"truth {path}: bad matrix header {line!r}") from exc
        block = lines[i + 1 : i + 1 + rows]
        if len(block) != rows:
            raise TruncatedFileError(f"truth {path}: matrix {tag} is truncated")
        matrices[tag] = np.array(
            [[float(t) for t in ln.split(",")] for ln in block]
        ).reshape(rows, cols)
        i += 1 + rows
    for required in ("B_true", "R_true"):
        if required not in matrices:
            raise FileFormatError(f"truth {path} lacks matrix {required}")
    return SimTruth(
        B_true=matrices["B_true"],
        R_true=matrices["R_true"],
        unidentified_B=matrices.get("gen_B"),
        unidentified_Theta=matrices.get("gen_Theta"),
    )


# ---------------------------------------------------------------------------
# run manifests


@dataclass
class RunManifest:
    """Digest record tying a run's outputs to its inputs and config."""

    config: ModelConfig | None
    file_digests: dict[str, str]
    tool_version: str = TOOL_VERSION
    created: str = ""


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def build_manifest(config: ModelConfig | None, files: dict[str, Path]) -> RunManifest:
    digests = {name: file_digest(p) for name, p in files.items()}
    return RunManifest(
        config=config,
        file_digests=digests,
        created=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


def _config_tokens(config: ModelConfig) -> str:
    return " ".join(
        [
            f"n_factors={config.n_factors}",
            f"n_iter={config.n_iter}",
            f"burn_in={config.burn_in}",
            f"seed={config.seed}",
            f"prior_variance={_fmt(config.prior_variance)}",
            f"thin={config.thin}",
            f"quantile_grid={_fmt_list(config.quantile_grid)}",
        ]
    )


def _config_from_tokens(text: str) -> ModelConfig:
    kv = dict(tok.split("=", 1) for tok in text.split())
    return ModelConfig(
        n_factors=int(kv["n_factors"]),
        n_iter=int(kv["n_iter"]),
        burn_in=int(kv["burn_in"]),
        seed=int(kv["seed"]),
        prior_variance=float(kv["prior_variance"]),
        thin=int(kv["thin"]),
        quantile_grid=tuple(float(t) for t in kv["quantile_grid"].split(",")),
    )


def save_manifest(manifest: RunManifest, path) -> None:
    lines = [
        "#mvprobit-manifest v1",
        f"#tool mvprobit {manifest.tool_version}",
        f"#created {manifest.created}",
    ]
    if manifest.config is not None:
        lines.append(f"#config {_config_tokens(manifest.config)}")
    for name, digest in sorted(manifest.file_digests.items()):
        lines.append(f"#file {name} sha256={digest}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path, verify: bool = True) -> RunManifest:
    """Parse a manifest; by default re-checks every digest it records.

    Digests are recomputed against the manifest's own directory, so a
    tampered or corrupted output set fails right at load.  Pass
    ``verify=False`` to inspect a manifest whose files live elsewhere,
    then call :func:`verify_manifest` against the right directory.
    """
    lines = _read_lines(path)
    if not lines:
        raise EmptyInputError(f"manifest file {path} is empty")
    _parse_version_line(lines[0], "manifest")
    config = None
    created = ""
    tool_version = ""
    digests: dict[str, str] = {}
    for line in lines[1:]:
        if line.startswith("#tool "):
            tool_version = line.split()[-1]
        elif line.startswith("#created "):
            created = line[len("#created "):]
        elif line.startswith("#config "):
            config = _config_from_tokens(line[len("#config "):])
        elif line.startswith("#file "):
            _, name, digest_part = line.split(" ", 2)
            digests[name] = digest_part.split("=", 1)[1]
    manifest = RunManifest(
        config=config, file_digests=digests, tool_version=tool_version, created=created
    )
    if verify:
        verify_manifest(manifest, Path(path).parent)
    return manifest


def verify_manifest(manifest: RunManifest, base_dir) -> None:
    """Recompute digests relative to ``base_dir``; raise on any mismatch."""
    base = Path(base_dir)
    bad = []
    for name, recorded in manifest.file_digests.items():
        target = base / name
        if not target.exists():
            bad.append(f"{name} (missing)")
            continue
        if file_digest(target) != recorded:
            bad.append(name)
    if bad:
        raise DigestMismatchError(
            "manifest digests do not match: " + ", ".join(sorted(bad))
        )
