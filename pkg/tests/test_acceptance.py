"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they
happen; the whole module takes a few minutes (it trains several encrypted
sessions at full desk scale).
"""

import random
import threading
import time
from contextlib import contextmanager

import numpy as np
import pytest

from synth import binary_dataset, make_parties, multiclass_dataset
from vfboost.config import PartySpec, TrainConfig
from vfboost.costmodel import CostParams, estimate_baseline, estimate_optimized, reduction
from vfboost.data import quantile_bin
from vfboost.encoding import (
    CipherSplitInfo,
    compress_capacity,
    compress_split_infos,
    compute_pack_state,
    decompress_package,
    mo_cipher_count,
    pack_gh,
    pack_gh_multiclass,
    recover_mo_splitinfo,
    unpack_gh,
)
from vfboost.federation.guest import GuestParty
from vfboost.federation.host import HostParty
from vfboost.federation.messages import MessageKind
from vfboost.federation.session import run_inproc_training
from vfboost.federation.transport import InProcHub
from vfboost.histogram import (
    CipherOps,
    IntOps,
    build_histogram,
    histogram_subtract,
    payload_total,
    recover_zero_bin,
)
from vfboost.local import LocalGBDT
from vfboost.losses import logloss_grad_hess
from vfboost.paillier import decrypt, encrypt, he_add, keygen


@contextmanager
def criterion(number: int, title: str):
    try:
        yield
    except BaseException:
        print(f"[criterion {number:2d}] FAIL — {title}")
        raise
    print(f"[criterion {number:2d}] PASS — {title}")


# -- shared fixtures ----------------------------------------------------------

N_C1 = 2000


def c1_config(**overrides):
    base = dict(
        session_id="acceptance", seed=202, tree_num=5, max_depth=3,
        key_bits=512, max_bins=32,
        parties=[PartySpec(role="guest"), PartySpec(role="host")],
    )
    base.update(overrides)
    return TrainConfig(**base).validate()


@pytest.fixture(scope="module")
def c1_data():
    X, y = binary_dataset(n=N_C1, d=20, seed=100)
    return make_parties(X, y, fractions=(0.5, 0.5)), y


@pytest.fixture(scope="module")
def c1_run(c1_data):
    parties, _y = c1_data
    cfg = c1_config()
    started = time.perf_counter()
    result = run_inproc_training(cfg, parties)
    elapsed = time.perf_counter() - started
    return cfg, result, elapsed


@pytest.fixture(scope="module")
def c1_oracle(c1_data):
    parties, _y = c1_data
    return LocalGBDT(c1_config().to_params()).fit(parties)


# -- criteria ------------------------------------------------------------------


def test_criterion_1_oracle_equivalence(c1_data, c1_run, c1_oracle):
    parties, y = c1_data
    cfg, result, elapsed = c1_run
    oracle = c1_oracle
    with criterion(1, "encrypted trainer selects oracle splits and weights"):
        assert elapsed <= 300.0, f"training took {elapsed:.1f}s > 5 minutes"
        checked_splits = checked_leaves = 0
        for tree_f, tree_o in zip(result.guest_model.trees, oracle.trees):
            assert set(tree_f.nodes) == set(tree_o.nodes)
            for nid, node_o in tree_o.nodes.items():
                node_f = tree_f.nodes[nid]
                assert node_f.is_leaf == node_o.is_leaf
                if node_o.is_leaf:
                    if node_o.weight is not None:
                        assert node_f.weight == pytest.approx(
                            node_o.weight, rel=1e-9, abs=1e-12
                        )
                        checked_leaves += 1
                    continue
                if node_f.owner_rank == 0:
                    got = (0, node_f.feature, node_f.bin_index)
                else:
                    split = result.host_models[node_f.owner_rank].splits[node_f.split_id]
                    got = (node_f.owner_rank, split["feature"], split["bin"])
                assert got == (node_o.owner_rank, node_o.feature, node_o.bin_index)
                checked_splits += 1
        assert checked_splits >= 5 * 3 and checked_leaves >= 5 * 4


def test_criterion_2_packing_bit_budget():
    with criterion(2, "published bit assignment b_g=74 b_h=73 b_gh=147, capacity 6"):
        state = compute_pack_state(
            np.array([-1.0, 1.0]), np.array([1.0, 1.0]), r=53, iota=1023,
            n_instances=1_000_000,
        )
        assert (state.g_off, state.g_max, state.h_max) == (1.0, 1.0, 1.0)
        assert (state.b_g, state.b_h, state.b_gh) == (74, 73, 147)
        assert compress_capacity(1023, state.b_gh) == 6


def test_criterion_3_cost_model_reproduction():
    with criterion(3, "cost model reports 75% compute and 78% enc/dec+comm reductions"):
        p = CostParams(n_instances=10**6, n_features=2000, n_bins=32, height=5,
                       compress_capacity=6)
        base, opt = estimate_baseline(p), estimate_optimized(p)
        assert abs(reduction(base.comp, opt.comp) - 0.75) <= 0.01
        assert abs(reduction(base.ende, opt.ende) - 0.78) <= 0.01
        assert abs(reduction(base.comm, opt.comm) - 0.78) <= 0.01


def test_criterion_4_encoding_roundtrips():
    kp = keygen(256, rng_seed=404)
    pk, sk = kp.public_key, kp.secret_key
    rng = np.random.default_rng(404)
    py_rng = random.Random(404)
    with criterion(4, "10,000 randomized cases each: pack, compress, multiclass"):
        # pack/unpack: exact integer sums, float recovery within n * 2^(1-r)
        for _ in range(10_000):
            n = py_rng.randrange(1, 9)
            r = py_rng.randrange(10, 54)
            g = rng.uniform(-4, 4, n)
            h = rng.uniform(0, 2, n)
            state = compute_pack_state(g, h, r=r)
            packed = pack_gh(g, h, state)
            total = sum(packed)
            g_sum, h_sum = unpack_gh(total, state, n)
            mask = (1 << state.b_h) - 1
            assert total >> state.b_h == sum(v >> state.b_h for v in packed)
            assert total & mask == sum(v & mask for v in packed)
            tol = n * 2.0 ** (1 - r)
            assert abs(g_sum - g.sum()) <= tol
            assert abs(h_sum - h.sum()) <= tol

        # compress/decompress: id/count metadata and integer payloads exact
        state = compute_pack_state(
            np.array([-1.0, 1.0]), np.array([1.0, 1.0]), r=16, n_instances=64
        )
        for case in range(10_000):
            eta = py_rng.randrange(1, compress_capacity(pk.max_plaintext_bits, state.b_gh) + 1)
            count = py_rng.randrange(1, eta + 1)
            plains = [py_rng.getrandbits(state.b_gh - 1) for _ in range(count)]
            infos = [
                CipherSplitInfo(split_id=case * 10 + i, sample_count=i + 1,
                                cipher=encrypt(pk, v))
                for i, v in enumerate(plains)
            ]
            (package,) = compress_split_infos(infos, eta, state.b_gh)
            entries = decompress_package(decrypt(sk, package.cipher), package, state)
            assert [e[2] for e in entries] == [i.split_id for i in infos]
            assert [e[3] for e in entries] == [i.sample_count for i in infos]
            for (g_sum, h_sum, _sid, sc), v in zip(entries, plains):
                eg, eh = unpack_gh(v, state, sc)
                assert (g_sum, h_sum) == (eg, eh)

        # multiclass pack/recover: per-class integer equality
        for case in range(10_000):
            k = py_rng.randrange(1, 7)
            n_rows = py_rng.randrange(1, 4)
            r = py_rng.randrange(10, 31)
            G = rng.uniform(-1, 1, (n_rows, k))
            H = rng.uniform(0, 0.5, (n_rows, k))
            state = compute_pack_state(
                G.ravel(), H.ravel(), r=r, iota=pk.max_plaintext_bits,
                n_instances=n_rows,
            )
            rows, eta_c, n_k = pack_gh_multiclass(G, H, state, pk)
            assert n_k == mo_cipher_count(k, eta_c)
            agg = rows[0]
            for row in rows[1:]:
                agg = [he_add(a, b) for a, b in zip(agg, row)]
            plains = [decrypt(sk, c) for c in agg]
            g_rec, h_rec = recover_mo_splitinfo(plains, k, eta_c, state, n_rows)
            tol = n_rows * 2.0 ** (1 - r)
            assert np.all(np.abs(g_rec - G.sum(axis=0)) <= tol)
            assert np.all(np.abs(h_rec - H.sum(axis=0)) <= tol)


def _cell_plain(sk, cell):
    return 0 if cell is None else decrypt(sk, cell)


def test_criterion_5_histogram_identities():
    kp = keygen(256, rng_seed=505)
    pk, sk = kp.public_key, kp.secret_key
    rng = np.random.default_rng(505)
    py_rng = random.Random(505)
    with criterion(5, "500 configs: sibling subtraction and zero recovery exact"):
        import warnings

        for config in range(500):
            n = py_rng.randrange(8, 26)
            d = py_rng.randrange(1, 4)
            bins = py_rng.randrange(2, 7)
            zero_frac = py_rng.choice([0.0, 0.2, 0.5])
            X = rng.uniform(-2, 2, (n, d))
            X[rng.random(X.shape) < zero_frac] = 0.0
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                binned = quantile_bin(X, n_bins=bins)
            g = rng.uniform(-1, 1, n)
            h = rng.uniform(0, 0.5, n)
            state = compute_pack_state(g, h, r=12, iota=pk.max_plaintext_bits)
            packed = pack_gh(g, h, state)
            ciphers = [encrypt(pk, v) for v in packed]
            parent_idx = np.arange(n)
            child_mask = rng.random(n) < py_rng.choice([0.3, 0.5])
            child_idx = parent_idx[child_mask]
            other_idx = parent_idx[~child_mask]

            def cipher_hist(idx):
                hist = build_histogram(binned, idx, ciphers, CipherOps)
                total = payload_total(ciphers, idx, CipherOps)
                recover_zero_bin(hist, total, len(idx), binned, CipherOps)
                return hist

            def int_hist_dense(idx):
                # densified oracle: every instance contributes to its
                # effective bin, zeros included
                hist = [[0] * int(b) for b in binned.n_bins_per_feature]
                for i in idx:
                    for f in range(d):
                        hist[f][binned.bin_of(int(i), f)] += packed[int(i)]
                return hist

            parent = cipher_hist(parent_idx)
            child = cipher_hist(child_idx) if len(child_idx) else None
            dense_parent = int_hist_dense(parent_idx)
            for f in range(d):
                for b in range(parent.layout[f]):
                    assert _cell_plain(sk, parent.cells[f][b]) == dense_parent[f][b]
            if child is None or len(other_idx) == 0:
                continue
            sibling = histogram_subtract(parent, child, CipherOps)
            dense_other = int_hist_dense(other_idx)
            for f in range(d):
                for b in range(parent.layout[f]):
                    assert _cell_plain(sk, sibling.cells[f][b]) == dense_other[f][b]


def test_criterion_6_cipher_operation_counters(c1_data, c1_run):
    parties, y = c1_data
    cfg, result, _elapsed = c1_run
    with criterion(6, "optimized pipeline: <=50% additions, <=1/capacity decryptions"):
        baseline_cfg = c1_config(packing=False, subtraction=False, compression=False)
        baseline = run_inproc_training(baseline_cfg, parties)
        adds_opt = result.cipher_counters[1]["additions"]
        adds_base = baseline.cipher_counters[1]["additions"]
        dec_opt = result.cipher_counters[0]["decryptions"]
        dec_base = baseline.cipher_counters[0]["decryptions"]
        # capacity as derived for the first epoch (raw-margin logistic g/h)
        g0, h0 = logloss_grad_hess(y, np.zeros(len(y)))
        state0 = compute_pack_state(g0, h0, r=cfg.precision)
        capacity = compress_capacity(cfg.key_bits - 1, state0.b_gh)
        assert capacity >= 2
        assert adds_opt <= 0.5 * adds_base, f"{adds_opt} vs {adds_base}"
        assert dec_opt <= (1 / capacity + 0.05) * dec_base, f"{dec_opt} vs {dec_base}"
        sent_opt = result.transport_counters[1]["ciphertexts_by_kind"]["SPLIT_PACKAGES"]
        sent_base = baseline.transport_counters[1]["ciphertexts_by_kind"]["SPLIT_PACKAGES"]
        assert sent_opt <= sent_base / capacity + 1


def test_criterion_7_goss(c1_data, c1_run):
    parties, y = c1_data
    cfg, result, _elapsed = c1_run
    with criterion(7, "GOSS uses exactly 30% per epoch, AUC within 0.02"):
        goss_cfg = c1_config(goss_enabled=True)
        goss = run_inproc_training(goss_cfg, parties)
        expect = -(-N_C1 // 5) + -(-N_C1 // 10)
        assert expect == int(0.3 * N_C1)
        assert all(e["n_selected"] == expect for e in goss.log)
        auc_full = result.log[-1]["metric"]
        auc_goss = goss.log[-1]["metric"]
        assert abs(auc_full - auc_goss) <= 0.02, f"{auc_goss} vs {auc_full}"


def _tapped_mix_run(cfg, parties):
    seen = []
    hub = InProcHub(2, cfg.session_id)
    hub.taps.append(lambda src, dst, msg: seen.append((src, dst, msg)))
    guest = GuestParty(cfg, parties[0], hub.transport(0))
    host = HostParty(1, cfg.session_id, parties[1], hub.transport(1))
    threads = [threading.Thread(target=guest.run_train),
               threading.Thread(target=host.run_train)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(300)
    return guest, seen


def test_criterion_8_mix_and_layered_modes(c1_data, c1_run):
    parties, y = c1_data
    cfg, result, _elapsed = c1_run
    with criterion(8, "mix/layered within 0.03 AUC; guest mix rounds silent"):
        auc_default = result.log[-1]["metric"]
        mix_cfg = c1_config(mode="mix", tree_per_party=1)
        guest, seen = _tapped_mix_run(mix_cfg, parties)
        auc_mix = guest.log[-1]["metric"]
        guest_rounds = {t for t in range(mix_cfg.tree_num) if t % 2 == 0}
        for _src, _dst, msg in seen:
            if msg.kind == MessageKind.SPLIT_PACKAGES:
                assert msg.epoch not in guest_rounds
        layered_cfg = c1_config(mode="layered", guest_depth=1, host_depth=2)
        layered = run_inproc_training(layered_cfg, parties)
        auc_layered = layered.log[-1]["metric"]
        assert abs(auc_mix - auc_default) <= 0.03, f"mix {auc_mix} vs {auc_default}"
        assert abs(auc_layered - auc_default) <= 0.03, f"layered {auc_layered} vs {auc_default}"


def test_criterion_9_multi_output_trees():
    with criterion(9, "multi-output mode: >=3x fewer trees at matching accuracy"):
        X, y = multiclass_dataset(n=5000, d=20, k=5, seed=110, spread=1.6)
        parties = make_parties(X, y, fractions=(0.5, 0.5))
        base = dict(
            session_id="acceptance-mo", seed=7, max_depth=3, key_bits=512,
            objective="multiclass", n_classes=5,
            parties=[PartySpec(role="guest"), PartySpec(role="host")],
        )
        default = run_inproc_training(TrainConfig(tree_num=4, **base).validate(), parties)
        mo = run_inproc_training(
            TrainConfig(tree_num=6, mode="mo", **base).validate(), parties
        )
        n_default = len(default.guest_model.trees)
        n_mo = len(mo.guest_model.trees)
        assert n_default / n_mo >= 3.0
        acc_default = default.log[-1]["metric"]
        acc_mo = mo.log[-1]["metric"]
        assert acc_mo >= acc_default - 0.02, f"{acc_mo} vs {acc_default}"


def test_criterion_10_determinism(c1_data, c1_run):
    parties, y = c1_data
    cfg, result, _elapsed = c1_run
    with criterion(10, "same seed + config -> byte-identical model shards"):
        rerun = run_inproc_training(c1_config(), parties)
        assert rerun.guest_model.to_json().encode() == result.guest_model.to_json().encode()
        assert (
            rerun.host_models[1].to_json().encode()
            == result.host_models[1].to_json().encode()
        )
