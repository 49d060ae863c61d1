"""Encoder and predictor tests."""

import numpy as np
import pytest

from csilab.autodiff import Tape, grad_check
from csilab.chemio import MolecularGraph, encode_fasta, parse_smiles
from csilab.encoders import (
    baseline_forward,
    cnn_encode,
    compound_arrays,
    gcn_encode,
    init_cnn_params,
    init_gcn_params,
    init_pair_head_params,
    init_predictor_params,
    mlp_forward,
    pair_project,
    params_to_tensors,
    predict_interaction,
    siamese_compound_pair,
    siamese_sequence_pair,
)

D = 8


def _gcn(seed=0, d=D):
    return init_gcn_params(np.random.default_rng(seed), d=d)


def _cnn(seed=1, d=D):
    return init_cnn_params(np.random.default_rng(seed), d=d,
                           embed_dim=6, n_filters=5, filter_width=4)


def _encode_graph(g, params):
    t = Tape()
    return gcn_encode(t, g, params_to_tensors(t, params, False)).values


def _encode_seq(codes, params):
    t = Tape()
    return cnn_encode(t, codes, params_to_tensors(t, params, False)).values


def _permute_graph(g: MolecularGraph, perm: list[int]) -> MolecularGraph:
    inv = [0] * len(perm)
    for old, new in enumerate(perm):
        inv[new] = old
    atoms = [g.atoms[inv[k]] for k in range(len(perm))]
    bonds = [(perm[i], perm[j], bf) for i, j, bf in g.bonds]
    return MolecularGraph(atoms=atoms, bonds=bonds)


class TestGcnEncode:
    def test_output_shape(self):
        z = _encode_graph(parse_smiles("CCO"), _gcn())
        assert z.shape == (1, D)

    def test_single_atom_graph(self):
        z = _encode_graph(parse_smiles("C"), _gcn())
        assert z.shape == (1, D)
        assert np.all(np.isfinite(z))

    def test_atom_permutation_invariance(self):
        rng = np.random.default_rng(5)
        params = _gcn()
        for smiles in ["CCO", "c1ccccc1", "CC(=O)Oc1ccccc1C(=O)O"]:
            g = parse_smiles(smiles)
            z = _encode_graph(g, params)
            for _ in range(3):
                perm = list(rng.permutation(g.n_atoms))
                zp = _encode_graph(_permute_graph(g, perm), params)
                np.testing.assert_allclose(zp, z, atol=1e-12)

    def test_zero_weights_leave_bias_path(self):
        params = _gcn()
        for name in params:
            if not name.endswith("_b"):
                params[name] = np.zeros_like(params[name])
        params["fc0_b"] = np.random.default_rng(6).normal(size=(1, D))
        params["fc1_b"] = np.random.default_rng(7).normal(size=(1, D))
        z = _encode_graph(parse_smiles("CCO"), _gcn(0))  # sanity: nonzero normally
        zb = _encode_graph(parse_smiles("CCO"), params)
        np.testing.assert_allclose(zb, params["fc1_b"])
        assert not np.allclose(z, zb)

    def test_accepts_precomputed_arrays(self):
        g = parse_smiles("CCO")
        params = _gcn()
        np.testing.assert_array_equal(
            _encode_graph(g, params), _encode_graph(compound_arrays(g), params))

    def test_gradients_through_encoder(self):
        g = parse_smiles("CCO")
        # Seed chosen so no relu input or pooled column sits near 0, where
        # central differences and subgradients legitimately disagree.
        params = _gcn(4, d=4)
        names = list(params)
        coeff = np.random.default_rng(8).normal(size=(1, 4))

        def f(tape, *arrays):
            pt = {n: a for n, a in zip(names, arrays)}
            z = gcn_encode(tape, g, pt)
            return tape.reduce_sum(tape.multiply(z, tape.constant(coeff)))

        assert grad_check(f, [params[n] for n in names], eps=1e-5) < 1e-4


class TestCnnEncode:
    def test_output_shape(self):
        z = _encode_seq(encode_fasta("MKVLA", length=20), _cnn())
        assert z.shape == (1, D)

    def test_all_padding_reduces_to_bias_path(self):
        params = _cnn()
        z = _encode_seq(np.zeros(16, dtype=int), params)
        manual = np.maximum(params["conv_b"], 0.0) @ params["fc_w"] + params["fc_b"]
        np.testing.assert_allclose(z, manual)

    def test_padding_length_does_not_matter(self):
        params = _cnn()
        a = _encode_seq(encode_fasta("MKVLA", length=20), params)
        b = _encode_seq(encode_fasta("MKVLA", length=33), params)
        np.testing.assert_array_equal(a, b)

    def test_motif_shift_pools_to_same_embedding(self):
        params = _cnn()
        motif = [13, 11, 22]  # interior placements, fully padded elsewhere
        early = np.zeros(40, dtype=int)
        early[8:11] = motif
        late = np.zeros(40, dtype=int)
        late[20:23] = motif
        np.testing.assert_array_equal(
            _encode_seq(early, params), _encode_seq(late, params))

    def test_gradients_through_encoder(self):
        codes = encode_fasta("MKVLAGE", length=12).codes
        params = init_cnn_params(np.random.default_rng(9), d=4,
                                 embed_dim=3, n_filters=4, filter_width=3)
        names = list(params)
        coeff = np.random.default_rng(10).normal(size=(1, 4))

        def f(tape, *arrays):
            pt = {n: a for n, a in zip(names, arrays)}
            z = cnn_encode(tape, codes, pt)
            return tape.reduce_sum(tape.multiply(z, tape.constant(coeff)))

        assert grad_check(f, [params[n] for n in names], eps=1e-5) < 1e-4

    def test_padding_row_initialized_to_zero(self):
        params = _cnn()
        np.testing.assert_array_equal(params["embed"][0], 0.0)


class TestSiamesePairs:
    def test_equal_inputs_give_equal_halves(self):
        params = _cnn()
        seq = encode_fasta("MKVLA", length=20)
        t = Tape()
        out = siamese_sequence_pair(t, seq, seq,
                                    params_to_tensors(t, params, False)).values
        np.testing.assert_array_equal(out[:, :D], out[:, D:])

    def test_swap_swaps_halves(self):
        params = _cnn()
        a = encode_fasta("MKVLA", length=20)
        b = encode_fasta("GGHERT", length=20)
        t = Tape()
        pt = params_to_tensors(t, params, False)
        ab = siamese_sequence_pair(t, a, b, pt).values
        ba = siamese_sequence_pair(t, b, a, pt).values
        np.testing.assert_array_equal(ab[:, :D], ba[:, D:])
        np.testing.assert_array_equal(ab[:, D:], ba[:, :D])

    def test_compound_pair_mirrors_sequence_pair(self):
        params = _gcn()
        ga, gb = parse_smiles("CCO"), parse_smiles("c1ccccc1")
        t = Tape()
        pt = params_to_tensors(t, params, False)
        out = siamese_compound_pair(t, ga, gb, pt).values
        assert out.shape == (1, 2 * D)
        np.testing.assert_array_equal(out[:, :D], gcn_encode(t, ga, pt).values)
        np.testing.assert_array_equal(out[:, D:], gcn_encode(t, gb, pt).values)

    def test_shared_weight_gradient_is_sum_of_branches(self):
        params = _cnn()
        a = encode_fasta("MKVLA", length=20)
        b = encode_fasta("GGHERT", length=20)

        t = Tape()
        pt = params_to_tensors(t, params, True)
        t.backward(t.reduce_sum(siamese_sequence_pair(t, a, b, pt)))
        shared = {n: p.grad for n, p in pt.items()}

        grads = []
        for seq in (a, b):
            ti = Tape()
            pti = params_to_tensors(ti, params, True)
            ti.backward(ti.reduce_sum(cnn_encode(ti, seq, pti)))
            grads.append({n: p.grad for n, p in pti.items()})
        for name in params:
            np.testing.assert_allclose(
                shared[name], grads[0][name] + grads[1][name], atol=1e-12)


class TestPairHead:
    def test_projects_to_d(self):
        head = init_pair_head_params(np.random.default_rng(11), d=D)
        t = Tape()
        pair = t.tensor(np.random.default_rng(12).normal(size=(1, 2 * D)))
        out = pair_project(t, pair, params_to_tensors(t, head, False))
        assert out.shape == (1, D)


class TestPredictor:
    def test_zero_input_zero_bias_gives_zero_logit(self):
        params = init_predictor_params(np.random.default_rng(13), in_width=4 * D)
        t = Tape()
        logit = predict_interaction(
            t, t.tensor(np.zeros((1, 2 * D))), t.tensor(np.zeros((1, 2 * D))),
            params_to_tensors(t, params, False))
        assert logit.values.item() == 0.0

    def test_identical_inputs_identical_logits(self):
        params = init_predictor_params(np.random.default_rng(14), in_width=4 * D)
        rng = np.random.default_rng(15)
        comp = rng.normal(size=(1, 2 * D))
        seq = rng.normal(size=(1, 2 * D))
        t = Tape()
        pt = params_to_tensors(t, params, False)
        l1 = predict_interaction(t, t.tensor(comp), t.tensor(seq), pt)
        l2 = predict_interaction(t, t.tensor(comp), t.tensor(seq), pt)
        assert l1.values.item() == l2.values.item()

    def test_hand_computed_tiny_network(self):
        # widths 4 -> 2 -> 1 -> 1 with hand-set weights
        params = {
            "w0": np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, -1.0]]),
            "b0": np.array([[0.5, 0.0]]),
            "w1": np.array([[2.0], [1.0]]),
            "b1": np.array([[-1.0]]),
            "w2": np.array([[3.0]]),
            "b2": np.array([[0.25]]),
        }
        x = np.array([[1.0, -2.0, 0.5, 1.0]])
        # layer0: [1+0.5+0.5, -2-1] -> relu -> [2.0, 0.0]
        # layer1: 2*2 + 0 - 1 = 3.0 -> relu -> 3.0
        # layer2: 3*3 + 0.25 = 9.25
        t = Tape()
        logit = mlp_forward(t, t.tensor(x), params_to_tensors(t, params, False))
        assert logit.values.item() == pytest.approx(9.25, abs=1e-12)

    def test_batched_rows_match_individual(self):
        params = init_predictor_params(np.random.default_rng(16), in_width=4 * D)
        rng = np.random.default_rng(17)
        comp = rng.normal(size=(5, 2 * D))
        seq = rng.normal(size=(5, 2 * D))
        t = Tape()
        pt = params_to_tensors(t, params, False)
        batch = predict_interaction(t, t.tensor(comp), t.tensor(seq), pt).values
        for i in range(5):
            one = predict_interaction(
                t, t.tensor(comp[i:i + 1]), t.tensor(seq[i:i + 1]), pt).values
            np.testing.assert_allclose(batch[i], one[0], atol=1e-12)

    def test_width_validation(self):
        rng = np.random.default_rng(18)
        with pytest.raises(ValueError):
            init_predictor_params(rng, in_width=6)
        with pytest.raises(ValueError):
            init_predictor_params(rng, in_width=0)


class TestBaseline:
    def test_matches_manual_composition(self):
        gcn_p, cnn_p = _gcn(20), _cnn(21)
        mlp_p = init_predictor_params(np.random.default_rng(22), in_width=2 * D)
        g = parse_smiles("CC(=O)O")
        s = encode_fasta("MKVLAGE", length=24)
        t = Tape()
        gt = params_to_tensors(t, gcn_p, False)
        ct = params_to_tensors(t, cnn_p, False)
        mt = params_to_tensors(t, mlp_p, False)
        got = baseline_forward(t, g, s, gt, ct, mt).values
        z = np.concatenate([gcn_encode(t, g, gt).values,
                            cnn_encode(t, s, ct).values], axis=1)
        want = mlp_forward(t, t.tensor(z), mt).values
        np.testing.assert_allclose(got, want, atol=1e-12)
        assert got.shape == (1, 1)

    def test_zero_everything_gives_zero_logit(self):
        gcn_p, cnn_p = _gcn(23), _cnn(24)
        mlp_p = init_predictor_params(np.random.default_rng(25), in_width=2 * D)
        for p in (gcn_p, cnn_p, mlp_p):
            for name in p:
                p[name] = np.zeros_like(p[name])
        t = Tape()
        logit = baseline_forward(
            t, parse_smiles("CCO"), encode_fasta("MKV", length=10),
            params_to_tensors(t, gcn_p, False), params_to_tensors(t, cnn_p, False),
            params_to_tensors(t, mlp_p, False))
        assert logit.values.item() == 0.0
