"""Host party: feature-only participant computing on ciphertexts.

A host never sees labels, plaintext gradients, gains or the secret key.  It
builds packed-ciphertext histograms over its own binned features, anonymizes
and shuffles its split candidates, compresses them, and reveals the meaning
of an anonymous split id to nobody — the id-to-(feature, bin) map stays in
the host's model shard.
"""

from __future__ import annotations

import random

import numpy as np

from ..data import PartyDataset, id_digest, quantile_bin
from ..encoding import CipherSplitInfo, compress_split_infos
from ..errors import ProtocolError
from ..histogram import CipherOps, CipherPairOps, CipherVecOps, cumsum_candidates
from ..histogram import HistogramEngine
from ..local import GBDTParams
from ..modes import candidate_parties, round_participants
from ..paillier import Ciphertext, PublicKey, obfuscate
from ..tree import NodeBatchTracker
from .messages import (
    Message,
    MessageKind,
    PAYLOAD_COMPRESSED,
    PAYLOAD_GH_PAIRS,
    PAYLOAD_MO_VECTORS,
    decode_best_splits,
    decode_epoch_gh,
    decode_layer_plan,
    decode_node_assign,
    decode_predict_query,
    decode_session_setup,
    encode_digests,
    encode_node_assign,
    encode_predict_route,
    encode_split_packages,
)
from .model import HostModel

GUEST = 0


class HostParty:
    def __init__(self, rank: int, session_id: str, dataset: PartyDataset, transport):
        if rank < 1:
            raise ProtocolError("host ranks start at 1")
        self.rank = rank
        self.session_id = session_id
        self.dataset = dataset
        self.transport = transport
        self.model: HostModel | None = None
        self.cipher_counters = None  # set when the public key arrives

    # -- shared plumbing ----------------------------------------------------

    def _msg(self, kind, payload, epoch=-1, layer=-1, cipher_count=0) -> Message:
        return Message(kind, epoch, layer, self.session_id, self.rank, payload,
                       cipher_count=cipher_count)

    def _align_ids(self) -> None:
        digests = [id_digest(self.session_id, v) for v in self.dataset.instance_ids]
        self.transport.send(GUEST, self._msg(MessageKind.ID_LIST, encode_digests(digests)))
        order_msg = self.transport.recv(GUEST, MessageKind.ID_ORDER)
        from .messages import decode_digests

        ordered = decode_digests(order_msg.payload)
        by_digest = {d: v for d, v in zip(digests, self.dataset.instance_ids)}
        try:
            ordered_ids = [by_digest[d] for d in ordered]
        except KeyError:
            raise ProtocolError("guest ordered an id this host does not hold")
        self.dataset = self.dataset.align(ordered_ids)

    # -- training -----------------------------------------------------------

    def run_train(self) -> HostModel:
        self._align_ids()
        setup_msg = self.transport.recv(GUEST, MessageKind.SESSION_SETUP)
        setup = decode_session_setup(setup_msg.payload)
        pk = PublicKey(setup["n"], setup["key_bits"])
        self.cipher_counters = pk.counters
        params = GBDTParams(
            n_trees=setup["tree_num"],
            max_depth=setup["max_depth"],
            learning_rate=setup["learning_rate"],
            max_bins=setup["max_bins"],
            reg_lambda=setup["reg_lambda"],
            min_gain=setup["min_gain"],
            min_samples=setup["min_samples"],
            objective=setup["objective"],
            n_classes=setup["n_classes"],
            goss_enabled=setup["goss"],
            top_rate=setup["top_rate"],
            other_rate=setup["other_rate"],
            seed=setup["seed"],
            use_subtraction=setup["subtraction"],
            mode=setup["mode"],
            tree_per_party=setup["tree_per_party"],
            guest_depth=setup["guest_depth"],
            host_depth=setup["host_depth"],
        )
        n_parties = setup["n_hosts"] + 1
        binned = quantile_bin(self.dataset.features, params.max_bins)
        dense_bins = binned.densify()
        # Deterministic anonymous ids and shuffles derive from the session seed.
        rng = random.Random((setup["seed"] * 7919 + self.rank) % 2**63)
        used_ids: set[int] = set()
        splits_out: dict[int, dict] = {}

        for tree_round, _meta in enumerate(params.tree_rounds()):
            hosts_in = round_participants(
                params.mode, tree_round, n_parties, params.tree_per_party,
                params.host_depth, params.max_depth,
            )
            if self.rank not in hosts_in:
                continue
            epoch_msg = self.transport.recv(GUEST, MessageKind.EPOCH_GH, epoch=tree_round)
            epoch = decode_epoch_gh(epoch_msg.payload)
            payload, ops = self._build_payload(epoch, pk)
            selected = np.nonzero(epoch["selected_mask"])[0].astype(np.int64)
            engine = HistogramEngine(binned, payload, ops,
                                     use_subtraction=setup["subtraction"])
            tracker = NodeBatchTracker(selected)
            state = epoch["pack_state"]
            for depth in range(params.max_depth):
                if not tracker.batch:
                    break
                active = candidate_parties(
                    params.mode, depth, n_parties, tree_round,
                    params.tree_per_party, params.host_depth,
                )
                if self.rank not in active:
                    break  # guest-owned layers follow; this tree is done here
                batch = tracker.batch
                layer_hists = engine.compute_layer(batch)
                pending: dict[int, tuple[int, int]] = {}
                per_node: dict[int, list] = {}
                n_ciphers = 0
                for node in batch:
                    hist, _total = layer_hists[node.node_id]
                    raw = cumsum_candidates(hist, node.count, ops)
                    items = []
                    for rc in raw:
                        sid = self._fresh_id(rng, used_ids)
                        pending[sid] = (rc.feature, rc.bin_index)
                        items.append((sid, rc))
                    rng.shuffle(items)
                    packaged = self._package(items, epoch, state, setup)
                    per_node[node.node_id] = packaged
                raw_payload, n_ciphers = encode_split_packages(
                    self._payload_kind(epoch), per_node
                )
                self.transport.send(
                    GUEST,
                    self._msg(MessageKind.SPLIT_PACKAGES, raw_payload,
                              epoch=tree_round, layer=depth, cipher_count=n_ciphers),
                )
                plan_msg = self.transport.recv(
                    GUEST, MessageKind.LAYER_PLAN, epoch=tree_round, layer=depth
                )
                plan = decode_layer_plan(plan_msg.payload)
                my_wins: dict[int, int] = {}
                if any(owner == self.rank for owner in plan.values()):
                    best_msg = self.transport.recv(
                        GUEST, MessageKind.BEST_SPLITS, epoch=tree_round, layer=depth
                    )
                    my_wins = dict(decode_best_splits(best_msg.payload))
                peers = [GUEST] + [r for r in active if r not in (0, self.rank)]
                masks: dict[int, np.ndarray] = {}
                for node_id in sorted(plan):
                    owner = plan[node_id]
                    if owner < 0:
                        continue
                    if owner == self.rank:
                        sid = my_wins[node_id]
                        feature, bin_index = pending[sid]
                        self._record_split(splits_out, sid, feature, bin_index, binned)
                        mask = dense_bins[:, feature] <= bin_index
                        raw_assign = encode_node_assign(node_id, self.rank, mask)
                        for peer in peers:
                            self.transport.send(
                                peer,
                                self._msg(MessageKind.NODE_ASSIGN, raw_assign,
                                          epoch=tree_round, layer=depth),
                            )
                        masks[node_id] = mask
                    else:
                        assign_msg = self.transport.recv(
                            owner, MessageKind.NODE_ASSIGN, epoch=tree_round, layer=depth
                        )
                        got_node, got_owner, mask = decode_node_assign(assign_msg.payload)
                        if got_node != node_id or got_owner != owner:
                            raise ProtocolError("assignment does not match the layer plan")
                        masks[node_id] = mask
                tracker.advance(masks, params.max_depth, params.min_samples)

        self.transport.recv(GUEST, MessageKind.SESSION_END)
        self.model = HostModel(
            session_id=self.session_id,
            rank=self.rank,
            feature_names=list(self.dataset.feature_names),
            bin_edges=binned.bin_edges,
            splits=splits_out,
        )
        return self.model

    def _fresh_id(self, rng: random.Random, used: set[int]) -> int:
        while True:
            sid = rng.getrandbits(63)
            if sid not in used:
                used.add(sid)
                return sid

    def _record_split(self, out, sid, feature, bin_index, binned):
        edges = binned.bin_edges[feature]
        out[sid] = {
            "feature": feature,
            "bin": bin_index,
            "threshold": float(edges[bin_index]) if bin_index < len(edges) else None,
        }

    def _payload_kind(self, epoch: dict) -> int:
        if epoch["mo"]:
            return PAYLOAD_MO_VECTORS
        return PAYLOAD_COMPRESSED if epoch["packing"] else PAYLOAD_GH_PAIRS

    def _build_payload(self, epoch: dict, pk: PublicKey):
        values = epoch["cipher_values"]
        selected = np.nonzero(epoch["selected_mask"])[0]
        if epoch["mo"]:
            n_k = epoch["n_k"]
            if len(values) != len(selected) * n_k:
                raise ProtocolError("cipher vector count does not match selection")
            payload = {
                int(i): [Ciphertext(v, pk) for v in values[j * n_k : (j + 1) * n_k]]
                for j, i in enumerate(selected)
            }
            return payload, CipherVecOps
        if epoch["packing"]:
            if len(values) != len(selected):
                raise ProtocolError("cipher count does not match selection")
            payload = {int(i): Ciphertext(v, pk) for i, v in zip(selected, values)}
            return payload, CipherOps
        if len(values) != 2 * len(selected):
            raise ProtocolError("cipher pair count does not match selection")
        payload = {
            int(i): (Ciphertext(values[2 * j], pk), Ciphertext(values[2 * j + 1], pk))
            for j, i in enumerate(selected)
        }
        return payload, CipherPairOps

    def _package(self, items, epoch: dict, state, setup: dict):
        """Anonymized candidates -> wire items, re-randomized before send."""
        if epoch["mo"]:
            return [
                (sid, rc.left_count, [obfuscate(c) for c in rc.cell]) for sid, rc in items
            ]
        if not epoch["packing"]:
            return [
                (sid, rc.left_count, obfuscate(rc.cell[0]), obfuscate(rc.cell[1]))
                for sid, rc in items
            ]
        capacity = epoch["capacity"] if setup["compression"] else 1
        infos = [
            CipherSplitInfo(split_id=sid, sample_count=rc.left_count, cipher=rc.cell)
            for sid, rc in items
        ]
        packages = compress_split_infos(infos, max(capacity, 1), state.b_gh)
        for package in packages:
            package.cipher = obfuscate(package.cipher)
        return packages

    # -- prediction ----------------------------------------------------------

    def run_predict(self, model: HostModel) -> None:
        """Serve routing queries against this host's split map until told to stop."""
        self._align_ids()
        edges = model.bin_edges
        from ..data import bin_values

        dense = np.stack(
            [bin_values(edges[f], self.dataset.features[:, f]) for f in range(len(edges))],
            axis=1,
        ) if len(edges) else np.zeros((self.dataset.n_instances, 0), dtype=np.int64)
        while True:
            msg = self.transport.recv(
                GUEST, (MessageKind.PREDICT_QUERY, MessageKind.SESSION_END)
            )
            if msg.kind == MessageKind.SESSION_END:
                return
            tree_index, node_id, split_id, idx = decode_predict_query(msg.payload)
            split = model.splits.get(split_id)
            if split is None:
                raise ProtocolError(f"unknown split id {split_id}")
            bits = dense[idx, split["feature"]] <= split["bin"]
            self.transport.send(
                GUEST,
                self._msg(
                    MessageKind.PREDICT_ROUTE,
                    encode_predict_route(tree_index, node_id, bits),
                ),
            )
