"""CSV and JSON-manifest writers shared by the CLI subcommands.

CSV files are UTF-8 with ``#``-prefixed metadata lines above the header row.
Floats are written with ``repr`` so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

FORMAT_VERSION = 1
TOOL_VERSION = "0.1.0"

METRIC_COLUMNS = ("round", "loss", "accuracy", "bits_per_device", "mechanism", "seed")
SWEEP_COLUMNS = ("table", "axis", "value", "n", "alpha", "eps_rqm", "eps_pbm")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def blob_hash(data: bytes) -> str:
    """Git blob hash: sha1 of ``"blob <len>\\0" + data``."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def content_hash(obj) -> str:
    """Git blob hash of the canonical JSON of ``obj``."""
    return blob_hash(canonical_json(obj).encode("utf-8"))


def render_csv(columns, rows, metadata: dict | None = None) -> str:
    buf = io.StringIO()
    meta = {"format_version": FORMAT_VERSION, "tool_version": TOOL_VERSION}
    meta.update(metadata or {})
    for key, value in meta.items():
        text = canonical_json(value) if isinstance(value, (dict, list)) else _fmt(value)
        buf.write(f"# {key}: {text}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows, metadata: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_csv(columns, rows, metadata), encoding="utf-8")
    return path


def read_csv(path) -> tuple[dict, list[dict]]:
    """Inverse of :func:`write_csv`: metadata (as strings) and row dicts."""
    meta, body = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(": ")
            meta[key] = value
        else:
            body.append(line)
    return meta, list(csv.DictReader(body))


def write_manifest(path, config: dict, outputs: list, extra: dict | None = None) -> Path:
    manifest = {
        "format_version": FORMAT_VERSION,
        "tool_version": TOOL_VERSION,
        "config": config,
        "config_hash": content_hash(config),
        # paths relative to the manifest, so reruns elsewhere stay byte-identical
        "outputs": {Path(p).name: blob_hash(Path(p).read_bytes()) for p in outputs},
    }
    manifest.update(extra or {})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path
