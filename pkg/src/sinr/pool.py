"""Clean/stego model pools and parameter-feature export for detectability studies.

A pool holds `count` items. Each item trains, on one cover signal, a stego
function (secret embedded, masked descent) and a clean function of the
identical structure (fresh init, plain descent). Per-item seeds - key
placement, both initializations, batch sampling - derive from the pool's
master seed by keyed hashing, so a pool is reproducible from (inputs, seed)
alone and no two items share placements.

The manifest is a JSON file listing relative model paths, labels, seeds, and
per-item divergence flags; it contains no timestamps, so rebuilding a pool
with the same inputs yields byte-identical files.

Feature export writes one CSV row per model: label (0 clean, 1 stego) then
the parameter values at `count` positions drawn once from the export seed
and shared by every model of the same structure, in ascending flat-index
order. Rows come in cover order, clean before stego, so consecutive row
pairs always describe the same cover item.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os

import numpy as np

from .codec import RasterImage, ScalarGrid, grid_to_dataset, image_to_dataset, load_grid, load_png
from .errors import ArgumentError, FormatError, IoError
from .expansion import ExpansionPlan, embed, keygen
from .model import (
    ModelFile,
    Role,
    init_params,
    load_model,
    param_count,
    pinned_rng,
    save_key,
    save_model,
)
from .training import TrainConfig, fit, fit_masked

MANIFEST_NAME = "manifest.json"


def derive_seed(master: int, index: int, tag: str) -> int:
    """A 64-bit child seed, stable across platforms, distinct per (index, tag)."""
    digest = hashlib.blake2b(f"{master}:{index}:{tag}".encode(), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


def load_signal(path: str) -> RasterImage | ScalarGrid:
    """Load a cover/message signal by extension: .png image, anything else grid."""
    if path.lower().endswith(".png"):
        return load_png(path)
    return load_grid(path)


def signal_dataset(signal: RasterImage | ScalarGrid):
    if isinstance(signal, RasterImage):
        return image_to_dataset(signal)
    return grid_to_dataset(signal)


def build_pool(
    covers: list[str],
    secret: ModelFile,
    plan: ExpansionPlan,
    count: int,
    seed: int,
    cfg: TrainConfig,
    out_dir: str,
    verbose: bool = False,
) -> dict:
    """Train `count` clean/stego pairs and write them plus a manifest.

    Covers are file paths, cycled when count exceeds their number. The
    plan's own placement seed is ignored: each item draws a fresh placement
    from the master seed, so secret positions differ across items.
    """
    if not covers:
        raise ArgumentError("pool needs at least one cover signal")
    if count < 1:
        raise ArgumentError(f"pool count must be >= 1, got {count}")
    plan.validate(secret.spec)
    os.makedirs(out_dir, exist_ok=True)

    datasets = {}
    items = []
    for i in range(count):
        cover_path = covers[i % len(covers)]
        if cover_path not in datasets:
            datasets[cover_path] = signal_dataset(load_signal(cover_path))
        ds = datasets[cover_path]

        seeds = {
            "placement": derive_seed(seed, i, "placement"),
            "stego_init": derive_seed(seed, i, "stego-init"),
            "clean_init": derive_seed(seed, i, "clean-init"),
            "stego_batch": derive_seed(seed, i, "stego-batch"),
            "clean_batch": derive_seed(seed, i, "clean-batch"),
        }
        item_plan = dataclasses.replace(plan, seed=seeds["placement"])
        key = keygen(secret.spec, item_plan)
        scaffold = embed(secret, key, init_seed=seeds["stego_init"])

        stego_cfg = dataclasses.replace(cfg, seed=seeds["stego_batch"])
        stego_params, stego_report = fit_masked(
            scaffold.spec, scaffold.params, scaffold.mask, ds, stego_cfg
        )
        clean_cfg = dataclasses.replace(cfg, seed=seeds["clean_batch"])
        clean_params, clean_report = fit(
            scaffold.spec, init_params(scaffold.spec, seeds["clean_init"]), ds, clean_cfg
        )

        names = {
            "key": f"item_{i:04d}_key.txt",
            "stego": f"item_{i:04d}_stego.sinr",
            "clean": f"item_{i:04d}_clean.sinr",
        }
        save_key(os.path.join(out_dir, names["key"]), key)
        save_model(
            os.path.join(out_dir, names["stego"]),
            ModelFile(spec=scaffold.spec, role=Role.STEGO, params=stego_params),
        )
        save_model(
            os.path.join(out_dir, names["clean"]),
            ModelFile(spec=scaffold.spec, role=Role.PLAIN, params=clean_params),
        )
        items.append(
            {
                "index": i,
                "cover": cover_path,
                "clean": names["clean"],
                "stego": names["stego"],
                "key": names["key"],
                "seeds": seeds,
                "clean_diverged": clean_report.diverged,
                "stego_diverged": stego_report.diverged,
                "clean_final_loss": clean_report.final_loss,
                "stego_final_loss": stego_report.final_loss,
            }
        )
        if verbose:
            flag = ""
            if clean_report.diverged or stego_report.diverged:
                flag = "  [DIVERGED]"
            print(
                f"item {i + 1}/{count}: clean loss {clean_report.final_loss:.3e}, "
                f"stego loss {stego_report.final_loss:.3e}{flag}"
            )

    manifest = {
        "format": 1,
        "strategy": plan.strategy.value,
        "stego_widths": list(plan.stego_widths),
        "secret_widths": list(secret.spec.layer_widths),
        "count": count,
        "master_seed": seed,
        "eta": cfg.eta,
        "epochs": cfg.epochs,
        "items": items,
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def load_manifest(path: str) -> tuple[dict, str]:
    """Read a manifest given its path or its pool directory; returns (manifest, dir)."""
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a manifest: {exc}") from exc
    if not isinstance(manifest, dict) or "items" not in manifest:
        raise FormatError(f"{path}: not a pool manifest")
    return manifest, os.path.dirname(os.path.abspath(path))


def export_features(
    manifest_path: str, out_path: str, feature_count: int = 1000, seed: int = 0
) -> int:
    """Write the labeled feature CSV for a pool; returns the row count.

    Positions are drawn once per structure from the seed (ascending order),
    so same-structure models contribute the same parameter slots.
    """
    if feature_count < 1:
        raise ArgumentError(f"feature count must be >= 1, got {feature_count}")
    manifest, base = load_manifest(manifest_path)

    rows = []
    positions_by_spec: dict = {}
    for item in manifest["items"]:
        for label, field in ((0, "clean"), (1, "stego")):
            model_path = os.path.join(base, item[field])
            mf = load_model(model_path)
            total = param_count(mf.spec)
            if total < feature_count:
                raise ArgumentError(
                    f"{model_path}: {total} parameters, need >= {feature_count} to export"
                )
            if mf.spec not in positions_by_spec:
                positions_by_spec[mf.spec] = np.sort(
                    pinned_rng(seed).choice(total, size=feature_count, replace=False)
                )
            values = mf.params.flat()[positions_by_spec[mf.spec]]
            rows.append(f"{label}," + ",".join(repr(float(v)) for v in values))

    pad = max(4, len(str(feature_count)))
    header = "label," + ",".join(f"f{i + 1:0{pad}d}" for i in range(feature_count))
    try:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            fh.write("\n".join(rows) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write features {out_path}: {exc}") from exc
    return len(rows)
