"""Command line workbench.

Subcommands: ingest, stats, stratify, synth, run, evaluate, ablate,
grid-tau. Global flags on every subcommand: --seed, --config (TOML or
JSON overrides for training settings), --out (artifact directory),
--threads (BLAS thread cap, default 1 for bitwise reproducibility).

Every command writes report.json plus manifest.json into --out; the
manifest records the resolved command, config snapshot, input digests,
seed, and output names. Timestamps appear only in the manifest, so
rerunning a command with the same inputs reproduces every other
artifact byte for byte.

Exit codes: 0 success, 2 configuration or schema problem, 3 data
problem, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from .errors import (
    ConfigError,
    CsilabError,
    DataError,
    InsufficientNegativeSpace,
    NumericError,
    SchemaError,
)

# numpy and the training modules are imported inside the command
# implementations so --threads can pin the BLAS pools first

RATIOS = (1, 5, 10, 25)
STRATIFICATIONS = ("none", "compound", "sequence", "compound+sequence",
                   "reaction", "rclass", "ec")
_PAIR_DROPS = ("compound", "sequence")
_VIEW_DROPS = ("v1", "v2", "v3")
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def _apply_threads(n: int) -> None:
    if n < 1:
        raise ConfigError(f"--threads must be at least 1, got {n}")
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


def _derived(*parts: int) -> int:
    import numpy as np
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _write_manifest(out, command, seed, threads, config_snapshot,
                    inputs, outputs) -> None:
    from datetime import datetime, timezone
    manifest = {
        "command": command,
        "config": config_snapshot,
        "created": datetime.now(timezone.utc).isoformat(),
        "inputs": {str(p): _digest(p) for p in inputs},
        "outputs": sorted(outputs),
        "seed": seed,
        "threads": threads,
    }
    _write_json(manifest, Path(out) / "manifest.json")


def _load_config_file(path) -> dict:
    p = Path(path)
    if p.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            obj = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    elif p.suffix == ".json":
        try:
            obj = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    else:
        raise ConfigError(f"config file must end in .toml or .json: {path}")
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected a table of settings")
    return obj


_SPLIT_KEYS = ("fractions", "unseen_fraction")


def _make_config(overrides, seed):
    """Resolve a TrainConfig plus split settings from file overrides.

    An explicit --seed wins over the config file; unknown keys are a
    configuration error rather than a silent ignore.
    """
    import dataclasses

    from .pipeline import TrainConfig

    overrides = dict(overrides or {})
    split_over = {k: overrides.pop(k) for k in _SPLIT_KEYS if k in overrides}
    valid = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = sorted(set(overrides) - valid)
    if unknown:
        raise ConfigError(
            f"unknown config key(s) {unknown}; valid keys: {sorted(valid)}")
    if seed is not None:
        overrides["seed"] = seed
    if "keep_views" in overrides:
        overrides["keep_views"] = tuple(overrides["keep_views"])
    if "fractions" in split_over:
        split_over["fractions"] = tuple(split_over["fractions"])
    try:
        cfg = TrainConfig(**overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg, split_over


def _config_from_snapshot(snapshot: dict):
    from .pipeline import TrainConfig
    d = dict(snapshot)
    d["keep_views"] = tuple(d.get("keep_views", (1, 2, 3)))
    return TrainConfig(**d)


def _load_bundle(interactions, reactions):
    """Load whichever input was given; reactions also yield induced pairs."""
    from .datamodel import load_interactions, load_reactions

    if (interactions is None) == (reactions is None):
        raise ConfigError("give exactly one of --interactions or --reactions")
    if interactions is not None:
        data, report = load_interactions(interactions)
        return None, data, report, [interactions]
    rset, induced, report = load_reactions(reactions)
    parent = Path(reactions).parent
    inputs = [reactions, parent / "compounds.tsv", parent / "sequences.tsv"]
    return rset, induced, report, inputs


def _counts(data, rset=None, report=None) -> dict:
    n_c, n_s = len(data.compounds), len(data.sequences)
    out = {
        "interactions": len(data.positives),
        "compounds": n_c,
        "sequences": n_s,
        "compound_sequence_ratio": n_c / n_s,
    }
    if data.labeled_negatives:
        out["labeled_negatives"] = len(data.labeled_negatives)
    if rset is not None:
        out["reactions"] = len(rset.reactions)
    if report is not None:
        out["rows"] = report.rows
        out["duplicates"] = report.duplicates
    return out


# ---------------------------------------------------------------------------
# synth


def cmd_synth(out, blocks=4, compounds_per_block=15, sequences_per_block=15,
              noise=0.05, seed=0, reactions=False, reactions_per_block=None,
              threads=1) -> dict:
    """Write a planted block-structure bundle into the output directory."""
    from .synth import (
        SynthSpec,
        synth_interactions,
        synth_reactions,
        write_interactions_tsv,
        write_reaction_bundle,
    )

    try:
        spec = SynthSpec(blocks=blocks, compounds_per_block=compounds_per_block,
                         sequences_per_block=sequences_per_block, noise=noise,
                         seed=seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if reactions:
        rset, induced, block_map = synth_reactions(spec, reactions_per_block)
        write_reaction_bundle(rset, out)
        outputs = ["reactions.jsonl", "compounds.tsv", "sequences.tsv"]
        counts = _counts(induced, rset)
    else:
        data, block_map = synth_interactions(spec)
        write_interactions_tsv(data, out / "interactions.tsv")
        outputs = ["interactions.tsv"]
        counts = _counts(data)

    report = {"blocks": blocks, "noise": noise, "seed": seed, "counts": counts}
    _write_json(block_map, out / "blocks.json")
    _write_json(report, out / "report.json")
    command = ["synth", "--blocks", str(blocks),
               "--compounds-per-block", str(compounds_per_block),
               "--sequences-per-block", str(sequences_per_block),
               "--noise", str(noise), "--seed", str(seed)]
    if reactions:
        command.append("--reactions")
        if reactions_per_block is not None:
            command += ["--reactions-per-block", str(reactions_per_block)]
    _write_manifest(out, command, seed, threads, None, [],
                    outputs + ["blocks.json", "report.json"])
    return report


# ---------------------------------------------------------------------------
# ingest / stats / stratify


def cmd_ingest(out, interactions=None, reactions=None, seed=0, threads=1) -> dict:
    """Parse and validate a bundle; report its counts."""
    rset, data, load_rep, inputs = _load_bundle(interactions, reactions)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"counts": _counts(data, rset, load_rep), "notes": load_rep.notes}
    _write_json(report, out / "report.json")
    source = ["--interactions", str(interactions)] if interactions is not None \
        else ["--reactions", str(reactions)]
    _write_manifest(out, ["ingest"] + source, seed, threads, None, inputs,
                    ["report.json"])
    return report


def _stats_for_views(views) -> dict:
    """Key counts, view counts, and member-set statistics for one keying."""
    import dataclasses

    from .datamodel import strata_stats
    from .stratify import ThreeViewStratum

    members = {}
    n_views = {"view1": 0, "view2": 0, "view3": 0} \
        if views.keying in ("reaction", "rclass", "ec") else 0
    for key, stratum in views.strata.items():
        if isinstance(stratum, ThreeViewStratum):
            n_views["view1"] += len(stratum.view1)
            n_views["view2"] += len(stratum.view2)
            n_views["view3"] += len(stratum.view3)
            members[key] = {s for _, s in stratum.view2}
        else:
            n_views += len(stratum)
            if views.keying == "compound":
                members[key] = {s for _, (si, sj) in stratum for s in (si, sj)}
            else:
                members[key] = {c for (ci, cj), _ in stratum for c in (ci, cj)}
    block = {
        "keys": len(views.strata),
        "eligible_keys": len(views.eligible_keys()),
        "views": n_views,
    }
    if members:
        block["member_stats"] = dataclasses.asdict(strata_stats(members))
    return block


def cmd_stats(out, interactions=None, reactions=None, seed=0, threads=1) -> dict:
    """Dataset counts plus per-keying stratification statistics."""
    from .stratify import (
        REACTION_KEYINGS,
        stratify_by_compound,
        stratify_by_reaction_feature,
        stratify_by_sequence,
    )

    rset, data, load_rep, inputs = _load_bundle(interactions, reactions)
    strata = {
        "compound": _stats_for_views(stratify_by_compound(data)),
        "sequence": _stats_for_views(stratify_by_sequence(data)),
    }
    if rset is not None:
        for keying in REACTION_KEYINGS:
            strata[keying] = _stats_for_views(
                stratify_by_reaction_feature(rset, keying))

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"counts": _counts(data, rset, load_rep), "strata": strata}
    _write_json(report, out / "report.json")
    source = ["--interactions", str(interactions)] if interactions is not None \
        else ["--reactions", str(reactions)]
    _write_manifest(out, ["stats"] + source, seed, threads, None, inputs,
                    ["report.json"])
    return report


def cmd_stratify(out, keying, interactions=None, reactions=None, seed=0,
                 threads=1) -> dict:
    """Materialize the congruent views for one keying as JSON."""
    from .stratify import (
        REACTION_KEYINGS,
        ThreeViewStratum,
        stratify_by_compound,
        stratify_by_reaction_feature,
        stratify_by_sequence,
    )

    rset, data, _, inputs = _load_bundle(interactions, reactions)
    if keying in REACTION_KEYINGS:
        if rset is None:
            raise ConfigError(f"keying {keying!r} needs --reactions input")
        views = stratify_by_reaction_feature(rset, keying)
    elif keying == "compound":
        views = stratify_by_compound(data)
    elif keying == "sequence":
        views = stratify_by_sequence(data)
    else:
        raise ConfigError(f"unknown keying {keying!r}")

    strata_json = {}
    for key, stratum in views.strata.items():
        if isinstance(stratum, ThreeViewStratum):
            strata_json[key] = {
                "view1": [list(p) for p in stratum.view1],
                "view2": [list(p) for p in stratum.view2],
                "view3": [list(p) for p in stratum.view3],
            }
        elif views.keying == "compound":
            strata_json[key] = [[si, sj] for _, (si, sj) in stratum]
        else:
            strata_json[key] = [[ci, cj] for (ci, cj), _ in stratum]

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "keying": keying,
        "keys": len(views.strata),
        "eligible_keys": views.eligible_keys(),
        "strata": strata_json,
    }
    _write_json(report, out / "report.json")
    source = ["--interactions", str(interactions)] if interactions is not None \
        else ["--reactions", str(reactions)]
    _write_manifest(out, ["stratify", "--keying", keying] + source, seed,
                    threads, None, inputs, ["report.json"])
    return report


# ---------------------------------------------------------------------------
# run / evaluate


def _split_bundle(data, cfg, split_over):
    """Unseen holdout first, then the seeded three-way split."""
    from .datamodel import SplitSpec, build_unseen_test, split

    try:
        spec = SplitSpec(seed=cfg.seed, **split_over)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    reduced, unseen = build_unseen_test(data, spec)
    train, val, test = split(reduced, spec)
    return train, val, test, unseen


def _evaluate_checkpoint(ckpt, train, val, test, unseen, full_data, cfg) -> dict:
    """Ranking reports on the held-out test set and the unseen objects.

    Test negatives are sampled at each ratio from the reduced universe,
    never colliding with positives of any other portion. The unseen
    report restricts both sides to objects that occur in unseen
    positives, so every scored pair is genuinely out of training reach.
    """
    from .datamodel import InteractionSet, sample_negatives
    from .metrics import ranking_report
    from .pipeline import score_pairs

    def scored(block_data, labeled):
        pairs = [(c, s) for c, s, _ in labeled]
        scores = score_pairs(ckpt, block_data, pairs)
        return ranking_report(
            [(c, s, float(z), y) for (c, s, y), z in zip(labeled, scores)])

    excl = train.positives | val.positives | unseen.positives
    block = {"test": {}}
    for ratio in RATIOS:
        try:
            labeled = sample_negatives(test, ratio,
                                       _derived(cfg.seed, 13, ratio),
                                       exclude=excl)
        except InsufficientNegativeSpace as exc:
            # very dense bundles cannot honor the larger ratios
            block["test"][f"{ratio}:1"] = {"skipped": str(exc)}
            continue
        block["test"][f"{ratio}:1"] = scored(test, labeled)

    if not unseen.positives:
        block["unseen_test"] = {"skipped": "no unseen positives"}
        return block
    u_comp = sorted({c for c, _ in unseen.positives})
    u_seq = sorted({s for _, s in unseen.positives})
    restricted = InteractionSet(
        {c: unseen.compounds[c] for c in u_comp},
        {s: unseen.sequences[s] for s in u_seq},
        set(unseen.positives))
    try:
        labeled = sample_negatives(restricted, 1, _derived(cfg.seed, 14),
                                   exclude=full_data.positives)
        block["unseen_test"] = {"1:1": scored(restricted, labeled)}
    except InsufficientNegativeSpace as exc:
        block["unseen_test"] = {"skipped": str(exc)}
    return block


def _resolve_drop(stratification, drop):
    drop = tuple(sorted(set(drop)))
    if stratification in ("none",):
        if drop:
            raise ConfigError("--drop has no effect with stratification=none")
        return drop
    if stratification in ("compound", "sequence", "compound+sequence"):
        bad = [d for d in drop if d not in _PAIR_DROPS]
        if bad:
            raise ConfigError(
                f"pair-keyed runs accept --drop from {_PAIR_DROPS}, got {bad}")
        kept = [k for k in stratification.split("+") if k not in drop]
        if not kept:
            raise ConfigError("every keying was dropped; nothing to train")
        return drop
    bad = [d for d in drop if d not in _VIEW_DROPS]
    if bad:
        raise ConfigError(
            f"reaction-keyed runs accept --drop from {_VIEW_DROPS}, got {bad}")
    return drop


def _train_once(rset, data, stratification, drop, cfg, split_over):
    """Shared train-then-evaluate path behind run, ablate, and grid-tau."""
    import dataclasses

    from .pipeline import train_baseline, train_contrastive, train_predictor
    from .stratify import (
        REACTION_KEYINGS,
        stratify_by_compound,
        stratify_by_reaction_feature,
        stratify_by_sequence,
    )

    drop = _resolve_drop(stratification, drop)
    train, val, test, unseen = _split_bundle(data, cfg, split_over)
    excl_train = val.positives | test.positives | unseen.positives
    excl_val = train.positives | test.positives | unseen.positives
    from .datamodel import sample_negatives
    labeled_train = sample_negatives(train, cfg.negative_ratio,
                                     _derived(cfg.seed, 11), exclude=excl_train)
    val_labeled = sample_negatives(val, cfg.negative_ratio,
                                   _derived(cfg.seed, 12), exclude=excl_val)

    if stratification == "none":
        ckpt = train_baseline(train, labeled_train, cfg, val_labeled)
    elif stratification in REACTION_KEYINGS:
        if rset is None:
            raise ConfigError(
                f"stratification {stratification!r} needs --reactions input")
        kept = tuple(v for v in (1, 2, 3) if f"v{v}" not in drop)
        try:
            cfg = dataclasses.replace(cfg, keep_views=kept)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        views = stratify_by_reaction_feature(rset, stratification)
        # reaction strata are defined by the bundle itself, not the split;
        # the interaction split still governs the predictor and evaluation
        encoders = train_contrastive(data, views, cfg)
        ckpt = train_predictor(encoders, train, labeled_train, cfg, val_labeled)
    else:
        kept = [k for k in stratification.split("+") if k not in drop]
        views = []
        if "compound" in kept:
            views.append(stratify_by_compound(train))
        if "sequence" in kept:
            views.append(stratify_by_sequence(train))
        encoders = train_contrastive(train, views, cfg)
        ckpt = train_predictor(encoders, train, labeled_train, cfg, val_labeled)

    evaluation = _evaluate_checkpoint(ckpt, train, val, test, unseen, data, cfg)
    counts = {
        "train_positives": len(train.positives),
        "val_positives": len(val.positives),
        "test_positives": len(test.positives),
        "unseen_positives": len(unseen.positives),
    }
    return ckpt, evaluation, counts, drop, cfg


def cmd_run(out, interactions=None, reactions=None,
            stratification="compound+sequence", drop=(), seed=None,
            config=None, plots=False, threads=1) -> dict:
    """Train one model end to end and evaluate it.

    stratification=none trains the end-to-end baseline on exactly the
    same split and negative samples as any stratified run with the same
    seed, so baseline-versus-stratified comparisons are paired.
    """
    from .pipeline import save_checkpoint, write_log

    if stratification not in STRATIFICATIONS:
        raise ConfigError(f"unknown stratification {stratification!r}; "
                          f"choose from {STRATIFICATIONS}")
    cfg, split_over = _make_config(config, seed)
    rset, data, _, inputs = _load_bundle(interactions, reactions)
    # _train_once hands back the effective config: view drops rewrite it
    ckpt, evaluation, counts, drop, cfg = _train_once(
        rset, data, stratification, drop, cfg, split_over)

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, out / "checkpoint.bin")
    write_log(ckpt.log, out / "training_log.jsonl")
    report = {
        "stratification": stratification,
        "drop": list(drop),
        "seed": cfg.seed,
        "config": cfg.snapshot(),
        "counts": {**_counts(data, rset), **counts},
        "evaluation": evaluation,
    }
    _write_json(report, out / "report.json")
    outputs = ["checkpoint.bin", "training_log.jsonl", "report.json"]
    if plots:
        _svg_loss_curve(ckpt.log, out / "loss.svg")
        ap_by_ratio = {
            label: blk["overall"]["average_precision"]
            for label, blk in evaluation["test"].items() if "overall" in blk}
        _svg_metric_bars(ap_by_ratio, "test AP by negative ratio",
                         out / "ap.svg")
        outputs += ["loss.svg", "ap.svg"]

    source = ["--interactions", str(interactions)] if interactions is not None \
        else ["--reactions", str(reactions)]
    command = ["run"] + source + ["--stratification", stratification]
    for d in drop:
        command += ["--drop", d]
    _write_manifest(out, command, cfg.seed, threads, cfg.snapshot(), inputs,
                    outputs)
    return report


def cmd_evaluate(out, checkpoint, interactions=None, reactions=None,
                 seed=None, threads=1) -> dict:
    """Re-score a saved checkpoint against a bundle.

    The split and negative samples are rebuilt from the seed stored in
    the checkpoint, so the report matches the one written at train time;
    an explicit --seed rebuilds them under a different split instead.
    """
    import dataclasses

    from .pipeline import load_checkpoint

    ckpt = load_checkpoint(checkpoint)
    try:
        cfg = _config_from_snapshot(ckpt.config)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"checkpoint config: {exc}") from exc
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    rset, data, _, inputs = _load_bundle(interactions, reactions)
    train, val, test, unseen = _split_bundle(data, cfg, {})
    evaluation = _evaluate_checkpoint(ckpt, train, val, test, unseen, data, cfg)

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "checkpoint": _digest(checkpoint),
        "seed": cfg.seed,
        "counts": _counts(data, rset),
        "evaluation": evaluation,
    }
    _write_json(report, out / "report.json")
    source = ["--interactions", str(interactions)] if interactions is not None \
        else ["--reactions", str(reactions)]
    command = ["evaluate", "--checkpoint", str(checkpoint)] + source
    _write_manifest(out, command, cfg.seed, threads, ckpt.config,
                    inputs + [checkpoint], ["report.json"])
    return report


# ---------------------------------------------------------------------------
# ablate / grid-tau


def _ap_summary(evaluation: dict) -> dict:
    """Overall AP per test ratio, the comparison row of an ablation table."""
    out = {label: blk["overall"]["average_precision"]
           for label, blk in evaluation["test"].items() if "overall" in blk}
    unseen = evaluation.get("unseen_test", {})
    if "1:1" in unseen:
        out["unseen"] = unseen["1:1"]["overall"]["average_precision"]
    return out


def cmd_ablate(out, interactions=None, reactions=None, stratification=None,
               seed=None, config=None, threads=1) -> dict:
    """Train the ablation family on one bundle and tabulate test AP.

    Reaction bundles ablate one congruent view at a time; interaction
    bundles ablate each keying and include the unstratified baseline.
    """
    cfg, split_over = _make_config(config, seed)
    rset, data, _, inputs = _load_bundle(interactions, reactions)

    if rset is not None:
        keying = stratification or "reaction"
        if keying not in ("reaction", "rclass", "ec"):
            raise ConfigError(
                f"ablation over a reaction bundle needs a reaction keying, "
                f"got {keying!r}")
        variants = [("all-views", keying, ()),
                    ("drop-v1", keying, ("v1",)),
                    ("drop-v2", keying, ("v2",)),
                    ("drop-v3", keying, ("v3",))]
    else:
        variants = [("compound+sequence", "compound+sequence", ()),
                    ("compound-only", "compound", ()),
                    ("sequence-only", "sequence", ()),
                    ("baseline", "none", ())]

    table = {}
    for name, strat, drop in variants:
        _, evaluation, _, _, _ = _train_once(rset, data, strat, drop, cfg,
                                             split_over)
        table[name] = _ap_summary(evaluation)

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"seed": cfg.seed, "config": cfg.snapshot(), "ablation": table}
    _write_json(report, out / "report.json")
    source = ["--interactions", str(interactions)] if interactions is not None \
        else ["--reactions", str(reactions)]
    command = ["ablate"] + source
    if stratification is not None:
        command += ["--stratification", stratification]
    _write_manifest(out, command, cfg.seed, threads, cfg.snapshot(), inputs,
                    ["report.json"])
    return report


def cmd_grid_tau(out, interactions, taus=(0.05, 0.06, 0.07, 0.08), seed=None,
                 config=None, threads=1) -> dict:
    """Sweep the contrastive temperature and tabulate test AP at 1:1."""
    import dataclasses

    taus = tuple(taus)
    if not taus or any(t <= 0 for t in taus):
        raise ConfigError(f"temperatures must be positive, got {taus}")
    cfg, split_over = _make_config(config, seed)
    rset, data, _, inputs = _load_bundle(interactions, None)

    table = {}
    for tau in taus:
        run_cfg = dataclasses.replace(cfg, tau=tau)
        _, evaluation, _, _, _ = _train_once(rset, data, "compound+sequence",
                                             (), run_cfg, split_over)
        table[f"{tau}"] = evaluation["test"]["1:1"].get(
            "overall", {}).get("average_precision")

    scoreable = [k for k, v in table.items() if v is not None]
    best = min(scoreable, key=lambda k: (-table[k], float(k))) \
        if scoreable else None
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"seed": cfg.seed, "config": cfg.snapshot(), "grid": table,
              "best_tau": float(best) if best is not None else None}
    _write_json(report, out / "report.json")
    command = ["grid-tau", "--interactions", str(interactions),
               "--taus", ",".join(str(t) for t in taus)]
    _write_manifest(out, command, cfg.seed, threads, cfg.snapshot(), inputs,
                    ["report.json"])
    return report


# ---------------------------------------------------------------------------
# plots: tiny hand-rolled SVGs, no plotting dependency


_PALETTE = ("#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377")


def _svg_loss_curve(records, path) -> None:
    """Training loss per epoch, one polyline per phase."""
    series = {}
    for rec in records:
        series.setdefault(rec["phase"], []).append(rec["loss"])
    width, height, margin = 420, 240, 36
    losses = [x for ys in series.values() for x in ys]
    if not losses:
        Path(path).write_text(
            '<svg xmlns="http://www.w3.org/2000/svg" width="1" height="1"/>\n')
        return
    lo, hi = min(losses), max(losses)
    span = (hi - lo) or 1.0
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" font-family="monospace" font-size="10">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    for i, (phase, ys) in enumerate(sorted(series.items())):
        color = _PALETTE[i % len(_PALETTE)]
        step = (width - 2 * margin) / max(len(ys) - 1, 1)
        pts = " ".join(
            f"{margin + j * step:.1f},"
            f"{height - margin - (y - lo) / span * (height - 2 * margin):.1f}"
            for j, y in enumerate(ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}"/>')
        parts.append(f'<text x="{margin}" y="{12 + 11 * i}" fill="{color}">'
                     f'{phase}</text>')
    parts.append(f'<text x="{margin}" y="{height - 8}">'
                 f'loss {lo:.4f} to {hi:.4f} by epoch</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def _svg_metric_bars(values: dict, title: str, path) -> None:
    """Horizontal bars for metrics in [0, 1]."""
    row_h, width, label_w = 22, 420, 90
    height = row_h * len(values) + 40
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" font-family="monospace" font-size="10">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="8" y="14">{title}</text>']
    for i, (label, value) in enumerate(values.items()):
        y = 26 + i * row_h
        bar = max(0.0, min(1.0, value)) * (width - label_w - 70)
        parts.append(f'<text x="8" y="{y + 14}">{label}</text>')
        parts.append(f'<rect x="{label_w}" y="{y + 4}" width="{bar:.1f}" '
                     f'height="{row_h - 8}" fill="{_PALETTE[0]}"/>')
        parts.append(f'<text x="{label_w + bar + 6:.1f}" y="{y + 14}">'
                     f'{value:.4f}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csilab",
        description="interaction prediction with stratified contrastive "
                    "pre-training")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    common.add_argument("--config", default=None,
                        help="TOML or JSON file with training settings")
    common.add_argument("--out", required=True, help="artifact directory")
    common.add_argument("--threads", type=int, default=1,
                        help="BLAS thread cap (default 1)")

    def add_inputs(p, need=True):
        grp = p.add_mutually_exclusive_group(required=need)
        grp.add_argument("--interactions", help="interaction TSV")
        grp.add_argument("--reactions",
                         help="reactions.jsonl with sibling definition TSVs")

    p = sub.add_parser("synth", parents=[common],
                       help="generate a planted block-structure bundle")
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--compounds-per-block", type=int, default=15)
    p.add_argument("--sequences-per-block", type=int, default=15)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--reactions", action="store_true",
                   help="emit a reaction bundle instead of an interaction grid")
    p.add_argument("--reactions-per-block", type=int, default=None)

    p = sub.add_parser("ingest", parents=[common],
                       help="validate a bundle and report counts")
    add_inputs(p)

    p = sub.add_parser("stats", parents=[common],
                       help="stratification statistics per keying")
    add_inputs(p)

    p = sub.add_parser("stratify", parents=[common],
                       help="materialize congruent views for one keying")
    add_inputs(p)
    p.add_argument("--keying", required=True,
                   choices=("compound", "sequence", "reaction", "rclass", "ec"))

    p = sub.add_parser("run", parents=[common],
                       help="train and evaluate one model")
    add_inputs(p)
    p.add_argument("--stratification", choices=STRATIFICATIONS,
                   default="compound+sequence")
    p.add_argument("--drop", action="append", default=[],
                   choices=_PAIR_DROPS + _VIEW_DROPS,
                   help="ablation mask, repeatable")
    p.add_argument("--plots", action="store_true", help="emit SVG plots")

    p = sub.add_parser("evaluate", parents=[common],
                       help="re-score a saved checkpoint")
    add_inputs(p)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("ablate", parents=[common],
                       help="train the ablation family and tabulate AP")
    add_inputs(p)
    p.add_argument("--stratification", default=None,
                   help="reaction keying for reaction bundles")

    p = sub.add_parser("grid-tau", parents=[common],
                       help="sweep the contrastive temperature")
    p.add_argument("--interactions", required=True)
    p.add_argument("--taus", default="0.05,0.06,0.07,0.08",
                   help="comma-separated temperatures")

    return parser


def _dispatch(args: argparse.Namespace) -> dict:
    config = _load_config_file(args.config) if args.config else None
    if args.command == "synth":
        return cmd_synth(args.out, blocks=args.blocks,
                         compounds_per_block=args.compounds_per_block,
                         sequences_per_block=args.sequences_per_block,
                         noise=args.noise, seed=args.seed or 0,
                         reactions=args.reactions,
                         reactions_per_block=args.reactions_per_block,
                         threads=args.threads)
    if args.command == "ingest":
        return cmd_ingest(args.out, interactions=args.interactions,
                          reactions=args.reactions, seed=args.seed or 0,
                          threads=args.threads)
    if args.command == "stats":
        return cmd_stats(args.out, interactions=args.interactions,
                         reactions=args.reactions, seed=args.seed or 0,
                         threads=args.threads)
    if args.command == "stratify":
        return cmd_stratify(args.out, args.keying,
                            interactions=args.interactions,
                            reactions=args.reactions, seed=args.seed or 0,
                            threads=args.threads)
    if args.command == "run":
        return cmd_run(args.out, interactions=args.interactions,
                       reactions=args.reactions,
                       stratification=args.stratification,
                       drop=tuple(args.drop), seed=args.seed, config=config,
                       plots=args.plots, threads=args.threads)
    if args.command == "evaluate":
        return cmd_evaluate(args.out, args.checkpoint,
                            interactions=args.interactions,
                            reactions=args.reactions, seed=args.seed,
                            threads=args.threads)
    if args.command == "ablate":
        return cmd_ablate(args.out, interactions=args.interactions,
                          reactions=args.reactions,
                          stratification=args.stratification, seed=args.seed,
                          config=config, threads=args.threads)
    if args.command == "grid-tau":
        try:
            taus = tuple(float(t) for t in args.taus.split(",") if t)
        except ValueError as exc:
            raise ConfigError(f"--taus: {exc}") from exc
        return cmd_grid_tau(args.out, args.interactions, taus=taus,
                            seed=args.seed, config=config,
                            threads=args.threads)
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _apply_threads(args.threads)
        _dispatch(args)
    except (ConfigError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        # missing or unreadable files count as data problems
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CsilabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
