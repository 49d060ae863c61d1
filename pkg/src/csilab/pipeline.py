"""Two-phase training: contrastive encoder pre-training, then a predictor.

Phase 1 trains encoder pairs on stratified view batches with the
temperature-scaled contrastive loss. Compound-keyed batches pit a graph
encoder against a shared-weight sequence-pair encoder (phase 1a);
sequence-keyed batches mirror that (phase 1b); reaction-feature batches
train three pair encoders jointly on the multiview loss. Phase 2
freezes every encoder, precomputes object embeddings, and fits only the
predictor MLP with class-weighted sigmoid cross-entropy and early
stopping. A separate end-to-end baseline trains the same encoder and
predictor shapes jointly without any contrastive stage.

Everything is driven by integer seeds: batch order, initialization, and
validation carve-outs derive child seeds from (seed, phase, epoch,
batch), so a run is reproducible bit for bit. Checkpoints serialize to
a canonical little-endian binary format with per-group checksums; the
frozen groups are checksummed again after phase 2 to prove the
predictor never touched them.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Tape, Tensor
from .chemio import encode_fasta, parse_smiles
from .contrastive import multiview_loss, total_loss
from .datamodel import InteractionSet
from .encoders import (
    compound_arrays,
    cnn_encode,
    gcn_encode,
    init_cnn_params,
    init_gcn_params,
    init_pair_head_params,
    init_predictor_params,
    mlp_forward,
    pair_project,
    params_to_tensors,
    siamese_compound_pair,
    siamese_sequence_pair,
)
from .errors import (
    BatchTooLarge,
    ChecksumMismatch,
    FrozenViolation,
    NonFiniteValue,
    ShapeMismatch,
    TooFewExamples,
    UnknownKeying,
    VersionMismatch,
)
from .stratify import REACTION_KEYINGS, CongruentViewSet, sample_batch

MAGIC = b"CSI1"
FORMAT_VERSION = 1

# fixed tags for deriving independent child seeds from the run seed
_TAG_PHASE_1A = 1
_TAG_PHASE_1B = 2
_TAG_MULTIVIEW = 3
_TAG_VAL_SPLIT = 4
_TAG_PREDICTOR_INIT = 5
_TAG_PREDICTOR_SHUFFLE = 6
_TAG_BASELINE_INIT = 7
_TAG_BASELINE_SHUFFLE = 8

# group names scanned, in order, when assembling per-object embeddings
_COMPOUND_GROUPS = ("gcn", "gcn-1a", "gcn-1b", "cc", "cs")
_SEQUENCE_GROUPS = ("cnn", "cnn-1a", "cnn-1b", "cs", "ss")


@dataclass
class TrainConfig:
    tau: float = 0.07
    phase1_epochs: int = 700
    phase2_epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 10
    seed: int = 0
    negative_ratio: int = 5
    include_positive: bool = False
    embed_dim: int = 32            # encoder output width d
    sequence_length: int = 1000    # residue window fed to the sequence encoder
    predictor_batch: int = 256
    keep_views: tuple = (1, 2, 3)  # three-view ablation mask

    def __post_init__(self):
        for name in ("tau", "phase1_epochs", "phase2_epochs", "batch_size",
                     "learning_rate", "adam_eps", "negative_ratio",
                     "embed_dim", "sequence_length", "predictor_batch"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise ValueError(f"betas must lie in (0, 1): {self.beta1}, {self.beta2}")
        if self.patience < 1:
            raise ValueError(f"patience must be at least 1, got {self.patience}")
        kept = tuple(sorted(set(self.keep_views)))
        if not set(kept) <= {1, 2, 3} or len(kept) < 2:
            raise ValueError(f"keep_views must name 2 or 3 of views 1-3, got {self.keep_views}")
        self.keep_views = kept

    def snapshot(self) -> dict:
        d = asdict(self)
        d["keep_views"] = list(self.keep_views)
        return d


@dataclass
class ParameterGroup:
    name: str
    params: dict[str, np.ndarray]
    frozen: bool = False


@dataclass
class Checkpoint:
    config: dict
    groups: dict[str, ParameterGroup]
    log: list = field(default_factory=list)
    log_digest: str = ""
    version: int = FORMAT_VERSION

    def append_log(self, records) -> None:
        self.log.extend(records)
        self.log_digest = log_digest(self.log)


def log_digest(records) -> str:
    """Digest of the training log in its canonical JSON-lines form."""
    h = hashlib.sha256()
    for rec in records:
        h.update(json.dumps(rec, sort_keys=True, separators=(",", ":")).encode())
        h.update(b"\n")
    return h.hexdigest()


def write_log(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _sub(mapping: dict, prefix: str) -> dict:
    plen = len(prefix)
    return {k[plen:]: v for k, v in mapping.items() if k.startswith(prefix)}


def _prefixed(prefix: str, params: dict) -> dict:
    return {prefix + k: v for k, v in params.items()}


# ---------------------------------------------------------------------------
# optimizer

def adam_step(params: dict, grads: dict, state: dict, config: TrainConfig) -> tuple:
    """One Adam update over a named parameter dict; state mutates in place.

    Missing gradient entries count as zero. The first call initializes
    the moment buffers from the parameter shapes.
    """
    if not state:
        state["t"] = 0
        state["m"] = {k: np.zeros_like(v) for k, v in params.items()}
        state["v"] = {k: np.zeros_like(v) for k, v in params.items()}
    state["t"] += 1
    t = state["t"]
    for name, p in params.items():
        g = grads.get(name)
        g = np.zeros_like(p) if g is None else np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient shape for {name!r}: {g.shape} vs {p.shape}")
        m = state["m"][name] = config.beta1 * state["m"][name] + (1.0 - config.beta1) * g
        v = state["v"][name] = config.beta2 * state["v"][name] + (1.0 - config.beta2) * g * g
        m_hat = m / (1.0 - config.beta1 ** t)
        v_hat = v / (1.0 - config.beta2 ** t)
        params[name] = p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return params, state


def _collect_grads(tensors: dict, params: dict) -> dict:
    grads = {}
    for name, ten in tensors.items():
        if ten.grad is None:
            grads[name] = np.zeros_like(params[name])
        else:
            grads[name] = ten.grad
    if "cnn.embed" in grads:
        grads["cnn.embed"] = grads["cnn.embed"].copy()
        grads["cnn.embed"][0, :] = 0.0  # padding row never learns
    return grads


# ---------------------------------------------------------------------------
# object materialization

class ObjectCache:
    """Parsed graphs and encoded sequences, keyed by id, built lazily."""

    def __init__(self, data: InteractionSet, sequence_length: int):
        self._data = data
        self._length = sequence_length
        self._graphs: dict = {}
        self._codes: dict = {}

    def graph(self, compound_id: str):
        if compound_id not in self._graphs:
            g = parse_smiles(self._data.compounds[compound_id])
            self._graphs[compound_id] = compound_arrays(g)
        return self._graphs[compound_id]

    def codes(self, sequence_id: str) -> np.ndarray:
        if sequence_id not in self._codes:
            enc = encode_fasta(self._data.sequences[sequence_id], self._length)
            self._codes[sequence_id] = enc.codes
        return self._codes[sequence_id]


# ---------------------------------------------------------------------------
# phase 1: contrastive pre-training

def _phase_loop(views: CongruentViewSet, config: TrainConfig, tag: int,
                phase_name: str, init_groups, batch_loss) -> tuple:
    keys = views.eligible_keys()
    if config.batch_size > len(keys):
        raise BatchTooLarge(
            f"{phase_name}: batch size {config.batch_size} exceeds {len(keys)} usable keys")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, tag]))
    groups = init_groups(rng)
    states = {name: {} for name in groups}
    n_batches = math.ceil(len(keys) / config.batch_size)
    records = []
    for epoch in range(config.phase1_epochs):
        losses = []
        for b in range(n_batches):
            batch = sample_batch(views, config.batch_size,
                                 _derived_seed(config.seed, tag, epoch, b))
            tape = Tape()
            tensors = {name: params_to_tensors(tape, params)
                       for name, params in groups.items()}
            try:
                loss = batch_loss(tape, tensors, batch.entries)
                tape.backward(loss)
            except NonFiniteValue as err:
                raise NonFiniteValue(
                    f"{phase_name} epoch {epoch} batch {b}: {err}") from err
            for name, params in groups.items():
                adam_step(params, _collect_grads(tensors[name], params),
                          states[name], config)
            losses.append(loss.values.item())
        records.append({"phase": phase_name, "epoch": epoch,
                        "loss": math.fsum(losses) / len(losses),
                        "val_loss": None})
    return groups, records


def _phase_compound_key(cache: ObjectCache, views: CongruentViewSet,
                        config: TrainConfig) -> tuple:
    d = config.embed_dim

    def init_groups(rng):
        return {
            "gcn-1a": _prefixed("gcn.", init_gcn_params(rng, d)),
            "cnn-1a": {**_prefixed("cnn.", init_cnn_params(rng, d)),
                       **_prefixed("head.", init_pair_head_params(rng, d))},
        }

    def batch_loss(tape, tensors, entries):
        gcn_pt = _sub(tensors["gcn-1a"], "gcn.")
        cnn_pt = _sub(tensors["cnn-1a"], "cnn.")
        head_pt = _sub(tensors["cnn-1a"], "head.")
        z1 = tape.concat([gcn_encode(tape, cache.graph(c), gcn_pt)
                          for _, c, _ in entries], axis=0)
        z2 = tape.concat([
            pair_project(tape, siamese_sequence_pair(
                tape, cache.codes(si), cache.codes(sj), cnn_pt), head_pt)
            for _, _, (si, sj) in entries], axis=0)
        return total_loss(tape, z1, z2, config.tau, config.include_positive)

    return _phase_loop(views, config, _TAG_PHASE_1A, "1a", init_groups, batch_loss)


def _phase_sequence_key(cache: ObjectCache, views: CongruentViewSet,
                        config: TrainConfig) -> tuple:
    d = config.embed_dim

    def init_groups(rng):
        return {
            "gcn-1b": {**_prefixed("gcn.", init_gcn_params(rng, d)),
                       **_prefixed("head.", init_pair_head_params(rng, d))},
            "cnn-1b": _prefixed("cnn.", init_cnn_params(rng, d)),
        }

    def batch_loss(tape, tensors, entries):
        gcn_pt = _sub(tensors["gcn-1b"], "gcn.")
        head_pt = _sub(tensors["gcn-1b"], "head.")
        cnn_pt = _sub(tensors["cnn-1b"], "cnn.")
        z1 = tape.concat([
            pair_project(tape, siamese_compound_pair(
                tape, cache.graph(ci), cache.graph(cj), gcn_pt), head_pt)
            for _, (ci, cj), _ in entries], axis=0)
        z2 = tape.concat([cnn_encode(tape, cache.codes(s), cnn_pt)
                          for _, _, s in entries], axis=0)
        return total_loss(tape, z1, z2, config.tau, config.include_positive)

    return _phase_loop(views, config, _TAG_PHASE_1B, "1b", init_groups, batch_loss)


def _phase_multiview(cache: ObjectCache, views: CongruentViewSet,
                     config: TrainConfig) -> tuple:
    d = config.embed_dim
    kept = config.keep_views

    def init_groups(rng):
        groups = {}
        if 1 in kept:
            groups["cc"] = {**_prefixed("gcn.", init_gcn_params(rng, d)),
                            **_prefixed("head.", init_pair_head_params(rng, d))}
        if 2 in kept:
            groups["cs"] = {**_prefixed("gcn.", init_gcn_params(rng, d)),
                            **_prefixed("cnn.", init_cnn_params(rng, d)),
                            **_prefixed("head.", init_pair_head_params(rng, d))}
        if 3 in kept:
            groups["ss"] = {**_prefixed("cnn.", init_cnn_params(rng, d)),
                            **_prefixed("head.", init_pair_head_params(rng, d))}
        return groups

    def batch_loss(tape, tensors, entries):
        zs = []
        if 1 in kept:
            gcn_pt = _sub(tensors["cc"], "gcn.")
            head_pt = _sub(tensors["cc"], "head.")
            zs.append(tape.concat([
                pair_project(tape, siamese_compound_pair(
                    tape, cache.graph(r), cache.graph(p), gcn_pt), head_pt)
                for _, (r, p), _, _ in entries], axis=0))
        if 2 in kept:
            gcn_pt = _sub(tensors["cs"], "gcn.")
            cnn_pt = _sub(tensors["cs"], "cnn.")
            head_pt = _sub(tensors["cs"], "head.")
            rows = []
            for _, _, (c, s), _ in entries:
                pair = tape.concat([gcn_encode(tape, cache.graph(c), gcn_pt),
                                    cnn_encode(tape, cache.codes(s), cnn_pt)],
                                   axis=1)
                rows.append(pair_project(tape, pair, head_pt))
            zs.append(tape.concat(rows, axis=0))
        if 3 in kept:
            cnn_pt = _sub(tensors["ss"], "cnn.")
            head_pt = _sub(tensors["ss"], "head.")
            zs.append(tape.concat([
                pair_project(tape, siamese_sequence_pair(
                    tape, cache.codes(si), cache.codes(sj), cnn_pt), head_pt)
                for _, _, _, (si, sj) in entries], axis=0))
        return multiview_loss(tape, zs, config.tau, config.include_positive)

    return _phase_loop(views, config, _TAG_MULTIVIEW, "multiview",
                       init_groups, batch_loss)


def train_contrastive(data: InteractionSet, views, config: TrainConfig) -> Checkpoint:
    """Run phase 1 over one or more congruent view sets; freeze the encoders.

    ``views`` is a single CongruentViewSet or a sequence of them:
    compound- and sequence-keyed sets run phases 1a/1b independently,
    a reaction-feature keyed set runs the joint three-view phase.
    """
    view_list = [views] if isinstance(views, CongruentViewSet) else list(views)
    if not view_list:
        raise ValueError("train_contrastive needs at least one view set")
    cache = ObjectCache(data, config.sequence_length)
    groups: dict[str, ParameterGroup] = {}
    records = []
    for vs in view_list:
        if vs.keying == "compound":
            trained, recs = _phase_compound_key(cache, vs, config)
        elif vs.keying == "sequence":
            trained, recs = _phase_sequence_key(cache, vs, config)
        elif vs.keying in REACTION_KEYINGS:
            trained, recs = _phase_multiview(cache, vs, config)
        else:
            raise UnknownKeying(f"no training phase for keying {vs.keying!r}")
        for name, params in trained.items():
            groups[name] = ParameterGroup(name, params, frozen=True)
        records.extend(recs)
    ckpt = Checkpoint(config=config.snapshot(), groups=groups)
    ckpt.append_log(records)
    return ckpt


# ---------------------------------------------------------------------------
# phase 2: predictor on frozen embeddings

def _object_embeddings(ckpt: Checkpoint, data: InteractionSet, compound_ids,
                       sequence_ids) -> tuple[dict, dict]:
    """Concatenated per-object embeddings from every trained encoder group."""
    length = int(ckpt.config.get("sequence_length", 1000))
    cache = ObjectCache(data, length)
    comp_encoders = [_sub(ckpt.groups[n].params, "gcn.")
                     for n in _COMPOUND_GROUPS
                     if n in ckpt.groups and _sub(ckpt.groups[n].params, "gcn.")]
    seq_encoders = [_sub(ckpt.groups[n].params, "cnn.")
                    for n in _SEQUENCE_GROUPS
                    if n in ckpt.groups and _sub(ckpt.groups[n].params, "cnn.")]
    if not comp_encoders or not seq_encoders:
        raise ValueError("checkpoint carries no trained encoder groups")

    comp_emb = {}
    for cid in sorted(compound_ids):
        rows = []
        for params in comp_encoders:
            tape = Tape()
            pt = params_to_tensors(tape, params, requires_grad=False)
            rows.append(gcn_encode(tape, cache.graph(cid), pt).values[0])
        comp_emb[cid] = np.concatenate(rows)
    seq_emb = {}
    for sid in sorted(sequence_ids):
        rows = []
        for params in seq_encoders:
            tape = Tape()
            pt = params_to_tensors(tape, params, requires_grad=False)
            rows.append(cnn_encode(tape, cache.codes(sid), pt).values[0])
        seq_emb[sid] = np.concatenate(rows)
    return comp_emb, seq_emb


def _weighted_bce(tape: Tape, logits: Tensor, labels: np.ndarray,
                  pos_weight: float) -> Tensor:
    """Mean sigmoid cross-entropy with the positive term scaled by pos_weight."""
    y = labels.reshape(-1, 1).astype(np.float64)
    pos = tape.multiply(tape.constant(y),
                        tape.softplus(tape.scalar_multiply(logits, -1.0)))
    neg = tape.multiply(tape.constant(1.0 - y), tape.softplus(logits))
    total = tape.add(tape.scalar_multiply(pos, pos_weight), neg)
    return tape.scalar_multiply(tape.reduce_sum(total), 1.0 / y.shape[0])


def _split_validation(labeled, val_labeled, config: TrainConfig) -> tuple:
    labeled = list(labeled)
    if val_labeled is not None:
        train_set, val_set = labeled, list(val_labeled)
    else:
        if len(labeled) < 10:
            raise TooFewExamples(f"need at least 10 labeled examples, got {len(labeled)}")
        rng = np.random.default_rng(
            np.random.SeedSequence([config.seed, _TAG_VAL_SPLIT]))
        order = rng.permutation(len(labeled)).tolist()
        n_val = max(1, len(labeled) // 10)
        chosen = set(order[:n_val])
        val_set = [labeled[i] for i in order[:n_val]]
        train_set = [labeled[i] for i in range(len(labeled)) if i not in chosen]
    if not train_set or not val_set:
        raise TooFewExamples("validation split emptied one side")
    n_pos = sum(1 for _, _, y in train_set if y == 1)
    n_neg = len(train_set) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise TooFewExamples("training needs both classes present")
    return train_set, val_set, n_neg / n_pos


def group_checksum(group: ParameterGroup) -> str:
    return hashlib.sha256(_group_bytes(group)).hexdigest()


def train_predictor(ckpt: Checkpoint, data: InteractionSet, labeled,
                    config: TrainConfig, val_labeled=None,
                    epoch_hook=None) -> Checkpoint:
    """Fit the predictor MLP on frozen embeddings with early stopping.

    ``labeled`` holds (compound_id, sequence_id, label) triples; a tenth
    of them is carved out for validation unless ``val_labeled`` is given.
    Raises FrozenViolation if any encoder parameter changes underneath.
    """
    encoder_groups = [g for g in ckpt.groups.values() if g.name != "predictor"]
    for g in encoder_groups:
        if not g.frozen:
            raise FrozenViolation(f"encoder group {g.name!r} must be frozen for phase 2")
    before = {g.name: group_checksum(g) for g in encoder_groups}

    train_set, val_set, pos_weight = _split_validation(labeled, val_labeled, config)
    comp_emb, seq_emb = _object_embeddings(
        ckpt, data,
        {c for c, _, _ in train_set} | {c for c, _, _ in val_set},
        {s for _, s, _ in train_set} | {s for _, s, _ in val_set})

    x_train = np.stack([np.concatenate([comp_emb[c], seq_emb[s]])
                        for c, s, _ in train_set])
    y_train = np.array([y for _, _, y in train_set], dtype=np.float64)
    x_val = np.stack([np.concatenate([comp_emb[c], seq_emb[s]])
                      for c, s, _ in val_set])
    y_val = np.array([y for _, _, y in val_set], dtype=np.float64)

    rng = np.random.default_rng(
        np.random.SeedSequence([config.seed, _TAG_PREDICTOR_INIT]))
    params = init_predictor_params(rng, x_train.shape[1])
    state: dict = {}
    best_loss = math.inf
    best_params = {k: v.copy() for k, v in params.items()}
    stall = 0
    records = []
    for epoch in range(config.phase2_epochs):
        order = np.random.default_rng(
            _derived_seed(config.seed, _TAG_PREDICTOR_SHUFFLE, epoch)
        ).permutation(len(train_set))
        sums = []
        for start in range(0, len(order), config.predictor_batch):
            idx = order[start:start + config.predictor_batch]
            tape = Tape()
            pt = params_to_tensors(tape, params)
            logits = mlp_forward(tape, tape.constant(x_train[idx]), pt)
            loss = _weighted_bce(tape, logits, y_train[idx], pos_weight)
            tape.backward(loss)
            adam_step(params, _collect_grads(pt, params), state, config)
            sums.append(loss.values.item() * len(idx))
        train_loss = math.fsum(sums) / len(order)

        tape = Tape()
        pt = params_to_tensors(tape, params, requires_grad=False)
        val_logits = mlp_forward(tape, tape.constant(x_val), pt)
        val_loss = _weighted_bce(tape, val_logits, y_val, pos_weight).values.item()
        records.append({"phase": "2", "epoch": epoch,
                        "loss": train_loss, "val_loss": val_loss})
        if epoch_hook is not None:
            epoch_hook(epoch, ckpt)
        if val_loss < best_loss:
            best_loss = val_loss
            best_params = {k: v.copy() for k, v in params.items()}
            stall = 0
        else:
            stall += 1
            if stall >= config.patience:
                break

    for g in encoder_groups:
        if group_checksum(g) != before[g.name]:
            raise FrozenViolation(
                f"frozen group {g.name!r} changed during predictor training")

    groups = dict(ckpt.groups)
    groups["predictor"] = ParameterGroup("predictor", best_params, frozen=False)
    out = Checkpoint(config=ckpt.config, groups=groups, version=ckpt.version)
    out.append_log(list(ckpt.log) + records)
    return out


def score_pairs(ckpt: Checkpoint, data: InteractionSet, pairs) -> np.ndarray:
    """Predictor logits for (compound_id, sequence_id, ...) tuples, in order."""
    if "predictor" not in ckpt.groups:
        raise ValueError("checkpoint has no predictor group")
    pairs = list(pairs)
    comp_emb, seq_emb = _object_embeddings(
        ckpt, data, {p[0] for p in pairs}, {p[1] for p in pairs})
    x = np.stack([np.concatenate([comp_emb[c], seq_emb[s]])
                  for c, s, *_ in pairs])
    tape = Tape()
    pt = params_to_tensors(tape, ckpt.groups["predictor"].params,
                           requires_grad=False)
    return mlp_forward(tape, tape.constant(x), pt).values[:, 0].copy()


# ---------------------------------------------------------------------------
# end-to-end baseline

def train_baseline(data: InteractionSet, labeled, config: TrainConfig,
                   val_labeled=None) -> Checkpoint:
    """Train encoders and predictor jointly on labeled pairs, no freezing."""
    cache = ObjectCache(data, config.sequence_length)
    train_set, val_set, pos_weight = _split_validation(labeled, val_labeled, config)
    d = config.embed_dim
    rng = np.random.default_rng(
        np.random.SeedSequence([config.seed, _TAG_BASELINE_INIT]))
    groups = {
        "gcn": _prefixed("gcn.", init_gcn_params(rng, d)),
        "cnn": _prefixed("cnn.", init_cnn_params(rng, d)),
        "predictor": init_predictor_params(rng, 2 * d),
    }
    states = {name: {} for name in groups}

    def forward(tape, tensors, examples):
        gcn_pt = _sub(tensors["gcn"], "gcn.")
        cnn_pt = _sub(tensors["cnn"], "cnn.")
        comp_enc = {c: gcn_encode(tape, cache.graph(c), gcn_pt)
                    for c in sorted({c for c, _, _ in examples})}
        seq_enc = {s: cnn_encode(tape, cache.codes(s), cnn_pt)
                   for s in sorted({s for _, s, _ in examples})}
        rows = [tape.concat([comp_enc[c], seq_enc[s]], axis=1)
                for c, s, _ in examples]
        return mlp_forward(tape, tape.concat(rows, axis=0), tensors["predictor"])

    best_loss = math.inf
    best = {name: {k: v.copy() for k, v in params.items()}
            for name, params in groups.items()}
    stall = 0
    records = []
    for epoch in range(config.phase2_epochs):
        order = np.random.default_rng(
            _derived_seed(config.seed, _TAG_BASELINE_SHUFFLE, epoch)
        ).permutation(len(train_set))
        sums = []
        for start in range(0, len(order), config.predictor_batch):
            idx = order[start:start + config.predictor_batch]
            examples = [train_set[i] for i in idx]
            tape = Tape()
            tensors = {name: params_to_tensors(tape, params)
                       for name, params in groups.items()}
            try:
                logits = forward(tape, tensors, examples)
                labels = np.array([y for _, _, y in examples], dtype=np.float64)
                loss = _weighted_bce(tape, logits, labels, pos_weight)
                tape.backward(loss)
            except NonFiniteValue as err:
                raise NonFiniteValue(f"baseline epoch {epoch}: {err}") from err
            for name, params in groups.items():
                adam_step(params, _collect_grads(tensors[name], params),
                          states[name], config)
            sums.append(loss.values.item() * len(idx))
        train_loss = math.fsum(sums) / len(order)

        tape = Tape()
        tensors = {name: params_to_tensors(tape, params, requires_grad=False)
                   for name, params in groups.items()}
        val_labels = np.array([y for _, _, y in val_set], dtype=np.float64)
        val_loss = _weighted_bce(tape, forward(tape, tensors, val_set),
                                 val_labels, pos_weight).values.item()
        records.append({"phase": "baseline", "epoch": epoch,
                        "loss": train_loss, "val_loss": val_loss})
        if val_loss < best_loss:
            best_loss = val_loss
            best = {name: {k: v.copy() for k, v in params.items()}
                    for name, params in groups.items()}
            stall = 0
        else:
            stall += 1
            if stall >= config.patience:
                break

    ckpt = Checkpoint(config=config.snapshot(),
                      groups={name: ParameterGroup(name, params)
                              for name, params in best.items()})
    ckpt.append_log(records)
    return ckpt


# ---------------------------------------------------------------------------
# checkpoint serialization

def _group_bytes(group: ParameterGroup) -> bytes:
    out = bytearray()
    name = group.name.encode()
    out += struct.pack("<I", len(name))
    out += name
    out += struct.pack("<B", 1 if group.frozen else 0)
    names = sorted(group.params)
    out += struct.pack("<I", len(names))
    for arr_name in names:
        arr = np.ascontiguousarray(group.params[arr_name], dtype=np.float64)
        nb = arr_name.encode()
        out += struct.pack("<I", len(nb))
        out += nb
        out += struct.pack("<I", arr.ndim)
        out += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        out += arr.astype("<f8").tobytes(order="C")
    return bytes(out)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    cfg = json.dumps(ckpt.config, sort_keys=True, separators=(",", ":")).encode()
    blob = bytearray(MAGIC)
    blob += struct.pack("<I", ckpt.version)
    blob += struct.pack("<Q", len(cfg))
    blob += cfg
    blob += bytes.fromhex(ckpt.log_digest) if ckpt.log_digest else bytes(32)
    names = sorted(ckpt.groups)
    blob += struct.pack("<I", len(names))
    checksums = []
    for name in names:
        gb = _group_bytes(ckpt.groups[name])
        blob += gb
        checksums.append(hashlib.sha256(gb).digest())
    for digest in checksums:
        blob += digest
    with open(path, "wb") as fh:
        fh.write(blob)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ChecksumMismatch("checkpoint truncated")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        vals = struct.unpack(fmt, self.take(struct.calcsize(fmt)))
        return vals[0] if len(vals) == 1 else vals


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    if r.take(len(MAGIC)) != MAGIC:
        raise ChecksumMismatch(f"{path}: not a checkpoint file (bad magic)")
    version = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise VersionMismatch(
            f"checkpoint format version {version}, this build reads version {FORMAT_VERSION}")
    cfg_len = r.unpack("<Q")
    config = json.loads(r.take(cfg_len).decode())
    digest = r.take(32)
    log_digest_hex = "" if digest == bytes(32) else digest.hex()
    n_groups = r.unpack("<I")
    groups = {}
    spans = []
    for _ in range(n_groups):
        start = r.pos
        name = r.take(r.unpack("<I")).decode()
        frozen = bool(r.unpack("<B"))
        n_arrays = r.unpack("<I")
        params = {}
        for _ in range(n_arrays):
            arr_name = r.take(r.unpack("<I")).decode()
            ndim = r.unpack("<I")
            shape = tuple(struct.unpack(f"<{ndim}Q", r.take(8 * ndim)))
            count = int(np.prod(shape)) if shape else 1
            data = r.take(8 * count)
            params[arr_name] = np.frombuffer(data, dtype="<f8").reshape(shape).copy()
        groups[name] = ParameterGroup(name, params, frozen=frozen)
        spans.append((name, blob[start:r.pos]))
    for name, span in spans:
        stored = r.take(32)
        if hashlib.sha256(span).digest() != stored:
            raise ChecksumMismatch(f"parameter group {name!r} is corrupted")
    if r.pos != len(blob):
        raise ChecksumMismatch(f"{path}: {len(blob) - r.pos} trailing bytes")
    return Checkpoint(config=config, groups=groups, log=[],
                      log_digest=log_digest_hex, version=version)
