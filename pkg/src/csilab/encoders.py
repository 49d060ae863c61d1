"""Compound and sequence encoders plus the interaction predictor.

The compound encoder stacks three neighbor-aggregation layers over atom
features, max-pools over atoms, and finishes with two dense layers. The
sequence encoder embeds residue codes, applies one bank of 1-D
convolutions, max-pools over positions, and projects to the output width.
Siamese pairings apply a single shared parameter set to both inputs and
concatenate; a linear pair head maps that 2d concatenation back to width d
so paired and single embeddings can be compared by cosine during
contrastive training.

Parameters are plain name->array dicts (insertion-ordered) so the
optimizer and checkpoint writer can treat every group uniformly. Forward
functions take a tape plus the dict mapped to tensors via params_to_tensors.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tape, Tensor, normalized_adjacency
from .chemio import ATOM_FEATURE_WIDTH, EncodedSequence, MolecularGraph, SEQUENCE_ALPHABET
from .errors import ShapeMismatch

ALPHABET_ROWS = len(SEQUENCE_ALPHABET) + 1  # residue codes 1..26 plus padding 0

Params = dict[str, np.ndarray]
ParamTensors = dict[str, Tensor]


def _glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in = int(np.prod(shape[:-1]))
    fan_out = int(shape[-1])
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_gcn_params(rng: np.random.Generator, d: int,
                    hidden: int | None = None,
                    atom_width: int = ATOM_FEATURE_WIDTH) -> Params:
    # biases start slightly positive: a relu layer that opens all-dead
    # yields an exactly-zero embedding, which the contrastive loss
    # rejects as a zero-norm error
    hidden = d if hidden is None else hidden
    return {
        "agg0": _glorot(rng, (atom_width, hidden)),
        "agg1": _glorot(rng, (hidden, hidden)),
        "agg2": _glorot(rng, (hidden, hidden)),
        "fc0_w": _glorot(rng, (hidden, hidden)),
        "fc0_b": np.full((1, hidden), 0.01),
        "fc1_w": _glorot(rng, (hidden, d)),
        "fc1_b": np.full((1, d), 0.01),
    }


def init_cnn_params(rng: np.random.Generator, d: int, embed_dim: int = 32,
                    n_filters: int = 32, filter_width: int = 8) -> Params:
    embed = rng.normal(0.0, 1.0 / np.sqrt(embed_dim),
                       size=(ALPHABET_ROWS, embed_dim))
    embed[0] = 0.0  # padding row stays zero for the life of the model
    return {
        "embed": embed,
        "conv_w": _glorot(rng, (filter_width, embed_dim, n_filters)),
        "conv_b": np.full((1, n_filters), 0.01),
        "fc_w": _glorot(rng, (n_filters, d)),
        "fc_b": np.full((1, d), 0.01),
    }


def init_pair_head_params(rng: np.random.Generator, d: int) -> Params:
    return {
        "head_w": _glorot(rng, (2 * d, d)),
        "head_b": np.full((1, d), 0.01),
    }


def init_predictor_params(rng: np.random.Generator, in_width: int) -> Params:
    """Three dense layers halving the width twice: w -> w/2 -> w/4 -> 1."""
    if in_width < 4 or in_width % 4 != 0:
        raise ValueError(f"predictor input width must be a multiple of 4, got {in_width}")
    h1, h2 = in_width // 2, in_width // 4
    return {
        "w0": _glorot(rng, (in_width, h1)),
        "b0": np.zeros((1, h1)),
        "w1": _glorot(rng, (h1, h2)),
        "b1": np.zeros((1, h2)),
        "w2": _glorot(rng, (h2, 1)),
        "b2": np.zeros((1, 1)),
    }


def params_to_tensors(tape: Tape, params: Params,
                      requires_grad: bool = True) -> ParamTensors:
    return {name: tape.tensor(arr, requires_grad=requires_grad)
            for name, arr in params.items()}


def compound_arrays(g: MolecularGraph) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and normalized adjacency for one molecular graph."""
    feats = np.asarray(g.feature_matrix(), dtype=np.float64)
    adj = normalized_adjacency(g.n_atoms, [(i, j) for i, j, _ in g.bonds])
    return feats, adj


def _as_graph_inputs(comp) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(comp, MolecularGraph):
        return compound_arrays(comp)
    feats, adj = comp
    return np.asarray(feats, dtype=np.float64), np.asarray(adj, dtype=np.float64)


def gcn_encode(tape: Tape, comp, pt: ParamTensors) -> Tensor:
    """Graph encoder: 3 aggregation layers, atom max-pool, 2 dense layers -> (1, d)."""
    feats, adj = _as_graph_inputs(comp)
    h = tape.constant(feats)
    for layer in ("agg0", "agg1", "agg2"):
        h = tape.relu(tape.matmul(tape.neighbor_aggregate(h, adj), pt[layer]))
    pooled = tape.global_max_pool(h)
    hidden = tape.relu(tape.add(tape.matmul(pooled, pt["fc0_w"]), pt["fc0_b"]))
    return tape.add(tape.matmul(hidden, pt["fc1_w"]), pt["fc1_b"])


def _as_codes(seq) -> np.ndarray:
    codes = seq.codes if isinstance(seq, EncodedSequence) else seq
    return np.asarray(codes, dtype=np.int64)


def cnn_encode(tape: Tape, seq, pt: ParamTensors) -> Tensor:
    """Sequence encoder: embed, convolve, position max-pool, dense -> (1, d)."""
    codes = _as_codes(seq)
    emb = tape.embedding_lookup(pt["embed"], codes)
    conv = tape.add(tape.conv1d(emb, pt["conv_w"]), pt["conv_b"])
    pooled = tape.global_max_pool(tape.relu(conv))
    return tape.add(tape.matmul(pooled, pt["fc_w"]), pt["fc_b"])


def siamese_compound_pair(tape: Tape, comp_i, comp_j, pt: ParamTensors) -> Tensor:
    """Shared-weight encoding of two compounds, concatenated -> (1, 2d)."""
    return tape.concat([gcn_encode(tape, comp_i, pt),
                        gcn_encode(tape, comp_j, pt)], axis=1)


def siamese_sequence_pair(tape: Tape, seq_i, seq_j, pt: ParamTensors) -> Tensor:
    """Shared-weight encoding of two sequences, concatenated -> (1, 2d)."""
    return tape.concat([cnn_encode(tape, seq_i, pt),
                        cnn_encode(tape, seq_j, pt)], axis=1)


def pair_project(tape: Tape, pair_vec: Tensor, pt: ParamTensors) -> Tensor:
    """Linear head mapping a (1, 2d) pair embedding to (1, d)."""
    return tape.add(tape.matmul(pair_vec, pt["head_w"]), pt["head_b"])


def mlp_forward(tape: Tape, x: Tensor, pt: ParamTensors) -> Tensor:
    """Halving-width 3-layer MLP; rows are independent examples."""
    h = tape.relu(tape.add(tape.matmul(x, pt["w0"]), pt["b0"]))
    h = tape.relu(tape.add(tape.matmul(h, pt["w1"]), pt["b1"]))
    return tape.add(tape.matmul(h, pt["w2"]), pt["b2"])


def predict_interaction(tape: Tape, z_comp_views: Tensor, z_seq_views: Tensor,
                        pt: ParamTensors) -> Tensor:
    """Logit from the concatenated view blocks: compound block then sequence block."""
    if z_comp_views.values.ndim != 2 or z_seq_views.values.ndim != 2:
        raise ShapeMismatch("predictor inputs must be row matrices")
    if z_comp_views.shape[0] != z_seq_views.shape[0]:
        raise ShapeMismatch(
            f"row mismatch: {z_comp_views.shape} vs {z_seq_views.shape}")
    x = tape.concat([z_comp_views, z_seq_views], axis=1)
    return mlp_forward(tape, x, pt)


def baseline_forward(tape: Tape, comp, seq, gcn_pt: ParamTensors,
                     cnn_pt: ParamTensors, mlp_pt: ParamTensors) -> Tensor:
    """Plain two-tower model: encode, concatenate, MLP -> logit (1, 1)."""
    z = tape.concat([gcn_encode(tape, comp, gcn_pt),
                     cnn_encode(tape, seq, cnn_pt)], axis=1)
    return mlp_forward(tape, z, mlp_pt)
