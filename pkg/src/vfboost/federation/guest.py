"""Guest party: label holder, key owner, global split selector.

The guest packs and encrypts per-instance gradient/hessian statistics each
epoch, decrypts the hosts' anonymized candidate aggregates, evaluates every
party's candidates with the same gain math as the plaintext trainer, and
keeps all leaf weights.  It learns which anonymous id won on which host, but
never a host feature index or threshold.
"""

from __future__ import annotations

import time

import numpy as np

from ..data import PartyDataset, bin_values, id_digest, quantile_bin
from ..encoding import (
    SplitInfoPackage,
    compress_capacity,
    compute_pack_state,
    decompress_package,
    fixpoint_encode,
    pack_gh,
    pack_gh_multiclass,
    recover_mo_splitinfo,
)
from ..errors import DatasetError, ProtocolError
from ..goss import epoch_seed, goss_sample
from ..histogram import FloatGHOps, FloatVecOps, HistogramEngine, cumsum_candidates
from ..losses import (
    logloss_grad_hess,
    logloss_value,
    one_hot,
    softmax_grad_hess,
    softmax_xent_value,
)
from ..metrics import accuracy_score, auc_score
from ..modes import candidate_parties, round_participants
from ..paillier import Ciphertext, decrypt, encrypt, keygen
from ..selection import Candidate, guest_key, select_best_split
from ..tree import (
    FullMembership,
    NodeBatchTracker,
    Tree,
    TreeNode,
    gh_total,
    gh_total_vec,
    leaf_weight,
    mo_leaf_weight,
)
from .messages import (
    Message,
    MessageKind,
    PAYLOAD_COMPRESSED,
    PAYLOAD_GH_PAIRS,
    PAYLOAD_MO_VECTORS,
    decode_digests,
    decode_node_assign,
    decode_predict_route,
    decode_split_packages,
    encode_best_splits,
    encode_digests,
    encode_epoch_gh,
    encode_layer_plan,
    encode_node_assign,
    encode_predict_query,
    encode_session_end,
    encode_session_setup,
)
from .model import GuestModel


class GuestParty:
    RANK = 0

    def __init__(self, config, dataset: PartyDataset, transport):
        if dataset.labels is None:
            raise DatasetError("guest dataset must carry labels")
        self.config = config
        self.dataset = dataset
        self.transport = transport
        self.host_ranks = list(range(1, config.n_hosts + 1))
        self.params = config.to_params()
        self.key_pair = None
        self.model: GuestModel | None = None
        self.log: list[dict] = []

    # -- plumbing -------------------------------------------------------------

    def _msg(self, kind, payload, epoch=-1, layer=-1, cipher_count=0) -> Message:
        return Message(kind, epoch, layer, self.config.session_id, self.RANK, payload,
                       cipher_count=cipher_count)

    def _broadcast(self, ranks, kind, payload, epoch=-1, layer=-1, cipher_count=0):
        for rank in ranks:
            self.transport.send(
                rank, self._msg(kind, payload, epoch, layer, cipher_count)
            )

    def _align_ids(self) -> None:
        salt = self.config.session_id
        digests = [id_digest(salt, v) for v in self.dataset.instance_ids]
        common = set(digests)
        for rank in self.host_ranks:
            msg = self.transport.recv(rank, MessageKind.ID_LIST)
            common &= set(decode_digests(msg.payload))
        if not common:
            raise DatasetError("instance id intersection is empty")
        ordered = sorted(common)
        self._broadcast(self.host_ranks, MessageKind.ID_ORDER, encode_digests(ordered))
        by_digest = {d: v for d, v in zip(digests, self.dataset.instance_ids)}
        self.dataset = self.dataset.align([by_digest[d] for d in ordered])

    # -- training ---------------------------------------------------------------

    def run_train(self) -> GuestModel:
        cfg = self.config
        p = self.params
        self._align_ids()
        n = self.dataset.n_instances
        # Key generation uses system entropy; the training seed only drives
        # sampling, shuffling and id assignment.
        self.key_pair = keygen(cfg.key_bits)
        setup = cfg.echo_dict()
        setup.update(
            {"key_bits": cfg.key_bits, "n": self.key_pair.public_key.n,
             "n_common": n, "n_hosts": cfg.n_hosts}
        )
        self._broadcast(self.host_ranks, MessageKind.SESSION_SETUP,
                        encode_session_setup(setup))

        self.binned = quantile_bin(self.dataset.features, p.max_bins)
        self._dense_bins = self.binned.densify()
        y = self.dataset.labels
        mo = p.multi_output
        if p.objective == "multiclass":
            Y = one_hot(y.astype(np.int64), p.n_classes)
            scores = np.zeros((n, p.n_classes))
        else:
            Y = None
            scores = np.zeros(n)

        self.trees: list[Tree] = []
        self.tree_meta: list[tuple[int, int]] = []
        for tree_round, (epoch, class_index) in enumerate(p.tree_rounds()):
            round_started = time.perf_counter()
            if p.objective == "multiclass":
                G_all, H_all = softmax_grad_hess(Y, scores)
                if mo:
                    g_w, h_w = G_all.copy(), H_all.copy()
                else:
                    g_w, h_w = G_all[:, class_index].copy(), H_all[:, class_index].copy()
            else:
                g_raw, h_raw = logloss_grad_hess(y, scores)
                if mo:
                    g_w, h_w = g_raw[:, None].copy(), h_raw[:, None].copy()
                else:
                    g_w, h_w = g_raw.copy(), h_raw.copy()

            root_idx = np.arange(n, dtype=np.int64)
            if p.goss_enabled:
                norms = np.linalg.norm(g_w, axis=1) if g_w.ndim == 2 else np.abs(g_w)
                root_idx, mult = goss_sample(
                    norms, p.top_rate, p.other_rate,
                    rng_seed=epoch_seed(p.seed, tree_round),
                )
                if g_w.ndim == 2:
                    g_w[root_idx] *= mult[:, None]
                    h_w[root_idx] *= mult[:, None]
                else:
                    g_w[root_idx] *= mult
                    h_w[root_idx] *= mult

            participants = round_participants(
                p.mode, tree_round, cfg.n_hosts + 1, p.tree_per_party,
                p.host_depth, p.max_depth,
            )
            round_state = None
            if participants:
                round_state = self._send_epoch_gh(
                    tree_round, participants, root_idx, g_w, h_w, n, mo
                )
            tree = self._grow_tree(
                tree_round, root_idx, g_w, h_w, mo, participants, round_state
            )
            self.trees.append(tree)
            self.tree_meta.append((epoch, class_index))
            self._apply_tree(tree, scores, class_index, mo)

            if p.objective == "multiclass":
                loss = softmax_xent_value(Y, scores)
                metric = accuracy_score(y, np.argmax(scores, axis=1))
            else:
                loss = logloss_value(y, scores)
                try:
                    metric = auc_score(y, scores)
                except ValueError:
                    metric = float("nan")
            self.log.append(
                {
                    "tree_round": tree_round,
                    "epoch": epoch,
                    "class_index": class_index,
                    "loss": loss,
                    "metric": metric,
                    "n_selected": int(len(root_idx)),
                    "seconds": time.perf_counter() - round_started,
                }
            )

        self._broadcast(self.host_ranks, MessageKind.SESSION_END, encode_session_end())
        self.model = GuestModel(
            session_id=cfg.session_id,
            objective=p.objective,
            n_classes=p.n_classes,
            multi_output=mo,
            mode=p.mode,
            learning_rate=p.learning_rate,
            feature_names=list(self.dataset.feature_names),
            bin_edges=self.binned.bin_edges,
            trees=self.trees,
            tree_meta=self.tree_meta,
            config_echo=cfg.echo_dict(),
        )
        return self.model

    def _send_epoch_gh(self, tree_round, participants, root_idx, g_w, h_w, n, mo):
        """Pack, encrypt and broadcast this round's gradient statistics.

        Returns the round state dict shared with candidate decoding.
        """
        cfg, pk = self.config, self.key_pair.public_key
        iota = pk.max_plaintext_bits
        if mo:
            G_sel, H_sel = g_w[root_idx], h_w[root_idx]
            # Offsets/maxima over the whole matrix; bit widths sized for
            # per-class sums over the selected instances.
            state = compute_pack_state(
                G_sel.ravel(), H_sel.ravel(), r=cfg.precision, iota=iota,
                n_instances=G_sel.shape[0],
            )
            rows, eta_c, n_k = pack_gh_multiclass(G_sel, H_sel, state, pk)
            ciphers = [c for row in rows for c in row]
            capacity = 0
            n_classes = G_sel.shape[1]
        else:
            g_sel, h_sel = g_w[root_idx], h_w[root_idx]
            state = compute_pack_state(g_sel, h_sel, r=cfg.precision, iota=iota)
            capacity = compress_capacity(iota, state.b_gh) if cfg.compression else 1
            eta_c = n_k = n_classes = 0
            if cfg.packing:
                ciphers = [encrypt(pk, v) for v in pack_gh(g_sel, h_sel, state)]
            else:
                ciphers = []
                for gi, hi in zip(g_sel, h_sel):
                    ciphers.append(
                        encrypt(pk, fixpoint_encode(gi + state.g_off, state.r))
                    )
                    ciphers.append(encrypt(pk, fixpoint_encode(hi, state.r)))
        mask = np.zeros(n, dtype=bool)
        mask[root_idx] = True
        payload, n_ciphers = encode_epoch_gh(
            mask, state, capacity, cfg.packing, ciphers,
            n_classes=n_classes, eta_c=eta_c, n_k=n_k,
        )
        for rank in participants:
            self.transport.send(
                rank,
                self._msg(MessageKind.EPOCH_GH, payload, epoch=tree_round,
                          cipher_count=n_ciphers),
            )
        return {
            "state": state,
            "capacity": capacity,
            "eta_c": eta_c,
            "n_k": n_k,
            "n_classes": n_classes,
        }

    def _grow_tree(self, tree_round, root_idx, g_w, h_w, mo, participants, round_state):
        cfg, p = self.config, self.params
        ops = FloatVecOps if mo else FloatGHOps
        payload = list(zip(g_w, h_w))
        engine = HistogramEngine(self.binned, payload, ops,
                                 use_subtraction=p.use_subtraction)
        tree = Tree()
        tree.add(TreeNode(node_id=0, depth=0))
        tracker = NodeBatchTracker(root_idx)
        full = FullMembership(self.binned.n_instances)

        while tracker.batch:
            batch = tracker.batch
            depth = batch[0].depth
            active = candidate_parties(
                p.mode, depth, cfg.n_hosts + 1, tree_round,
                p.tree_per_party, p.host_depth,
            )
            guest_active = 0 in active
            active_hosts = [r for r in active if r != 0]
            layer_hists = engine.compute_layer(batch) if guest_active else {}
            host_candidates = {node.node_id: [] for node in batch}
            for rank in active_hosts:
                msg = self.transport.recv(
                    rank, MessageKind.SPLIT_PACKAGES, epoch=tree_round, layer=depth
                )
                self._decode_host_candidates(msg, rank, round_state, host_candidates)

            plan: dict[int, int] = {}
            wins_by_host: dict[int, list[tuple[int, int]]] = {}
            splits_meta: dict[int, Candidate] = {}
            for node in batch:
                totals = (
                    gh_total_vec(g_w, h_w, node.indices)
                    if mo
                    else gh_total(g_w, h_w, node.indices)
                )
                candidates = list(host_candidates[node.node_id])
                if guest_active:
                    hist, _total = layer_hists[node.node_id]
                    for rc in cumsum_candidates(hist, node.count, ops):
                        g_l, h_l = rc.cell
                        candidates.append(
                            Candidate(
                                party_rank=0,
                                key=guest_key(rc.feature, rc.bin_index),
                                g_left=g_l,
                                h_left=h_l,
                                left_count=rc.left_count,
                                feature=rc.feature,
                                bin_index=rc.bin_index,
                            )
                        )
                best = select_best_split(
                    candidates, totals[0], totals[1], p.reg_lambda, p.min_gain,
                    multi_output=mo,
                )
                rec = tree.nodes[node.node_id]
                if best is None:
                    plan[node.node_id] = -1
                    self._set_leaf(rec, totals, mo)
                    continue
                plan[node.node_id] = best.party_rank
                splits_meta[node.node_id] = best
                rec.owner_rank = best.party_rank
                if best.party_rank == 0:
                    rec.feature = best.feature
                    rec.bin_index = best.bin_index
                    edges = self.binned.bin_edges[best.feature]
                    if best.bin_index < len(edges):
                        rec.threshold = float(edges[best.bin_index])
                else:
                    rec.split_id = best.split_id
                    wins_by_host.setdefault(best.party_rank, []).append(
                        (node.node_id, best.split_id)
                    )

            if active_hosts:
                plan_payload = encode_layer_plan(plan)
                self._broadcast(
                    active_hosts, MessageKind.LAYER_PLAN, plan_payload,
                    epoch=tree_round, layer=depth,
                )
                for rank in sorted(wins_by_host):
                    self.transport.send(
                        rank,
                        self._msg(
                            MessageKind.BEST_SPLITS,
                            encode_best_splits(sorted(wins_by_host[rank])),
                            epoch=tree_round, layer=depth,
                        ),
                    )

            masks: dict[int, np.ndarray] = {}
            for node_id in sorted(plan):
                owner = plan[node_id]
                if owner < 0:
                    continue
                if owner == 0:
                    best = splits_meta[node_id]
                    mask = self._dense_bins[:, best.feature] <= best.bin_index
                    if active_hosts:
                        self._broadcast(
                            active_hosts, MessageKind.NODE_ASSIGN,
                            encode_node_assign(node_id, 0, mask),
                            epoch=tree_round, layer=depth,
                        )
                else:
                    msg = self.transport.recv(
                        owner, MessageKind.NODE_ASSIGN, epoch=tree_round, layer=depth
                    )
                    got_node, got_owner, mask = decode_node_assign(msg.payload)
                    if got_node != node_id or got_owner != owner:
                        raise ProtocolError("assignment does not match the layer plan")
                masks[node_id] = mask

            _next, children = tracker.advance(masks, p.max_depth, p.min_samples)
            for state, is_leaf in children:
                child = tree.add(TreeNode(node_id=state.node_id, depth=state.depth))
                parent = tree.nodes[state.parent_id]
                if parent.left < 0:
                    parent.left = state.node_id
                    full.split(state.parent_id, state.node_id, state.sibling_id,
                               masks[state.parent_id])
                else:
                    parent.right = state.node_id
                if is_leaf:
                    totals = (
                        gh_total_vec(g_w, h_w, state.indices)
                        if mo
                        else gh_total(g_w, h_w, state.indices)
                    )
                    self._set_leaf(child, totals, mo)
        tree.node_indices = full.indices
        return tree

    def _decode_host_candidates(self, msg, rank, round_state, out):
        sk = self.key_pair.secret_key
        pk = self.key_pair.public_key
        state = round_state["state"]
        payload_kind, per_node = decode_split_packages(msg.payload)
        for node_id, items in per_node.items():
            if node_id not in out:
                raise ProtocolError(f"host {rank} sent candidates for unknown node {node_id}")
            cands = out[node_id]
            if payload_kind == PAYLOAD_COMPRESSED:
                for item in items:
                    package = SplitInfoPackage(
                        cipher=None,
                        split_ids=item["split_ids"],
                        sample_counts=item["sample_counts"],
                    )
                    plain = decrypt(sk, Ciphertext(item["cipher_value"], pk))
                    for g_sum, h_sum, sid, count in decompress_package(
                        plain, package, state
                    ):
                        cands.append(
                            Candidate(
                                party_rank=rank, key=sid, g_left=g_sum,
                                h_left=h_sum, left_count=count, split_id=sid,
                            )
                        )
            elif payload_kind == PAYLOAD_GH_PAIRS:
                for item in items:
                    g_int = decrypt(sk, Ciphertext(item["g_value"], pk))
                    h_int = decrypt(sk, Ciphertext(item["h_value"], pk))
                    count = item["sample_count"]
                    cands.append(
                        Candidate(
                            party_rank=rank,
                            key=item["split_id"],
                            g_left=state.decode_g_sum(g_int, count),
                            h_left=state.decode_h_sum(h_int),
                            left_count=count,
                            split_id=item["split_id"],
                        )
                    )
            elif payload_kind == PAYLOAD_MO_VECTORS:
                for item in items:
                    plains = [decrypt(sk, Ciphertext(v, pk)) for v in item["values"]]
                    g_vec, h_vec = recover_mo_splitinfo(
                        plains, round_state["n_classes"], round_state["eta_c"],
                        state, item["sample_count"],
                    )
                    cands.append(
                        Candidate(
                            party_rank=rank,
                            key=item["split_id"],
                            g_left=g_vec,
                            h_left=h_vec,
                            left_count=item["sample_count"],
                            split_id=item["split_id"],
                        )
                    )
            else:
                raise ProtocolError(f"unknown split payload kind {payload_kind}")

    def _set_leaf(self, rec: TreeNode, totals, mo: bool):
        lam = self.params.reg_lambda
        if mo:
            rec.weight = mo_leaf_weight(totals[0], totals[1], lam).tolist()
        else:
            rec.weight = leaf_weight(totals[0], totals[1], lam)

    def _apply_tree(self, tree: Tree, scores, class_index: int, mo: bool):
        lr = self.params.learning_rate
        for node in sorted(tree.leaves(), key=lambda r: r.node_id):
            idx = tree.node_indices[node.node_id]
            if len(idx) == 0:
                continue
            if mo:
                scores[idx] += lr * np.asarray(node.weight)
            elif self.params.objective == "multiclass":
                scores[idx, class_index] += lr * node.weight
            else:
                scores[idx] += lr * node.weight

    # -- prediction ---------------------------------------------------------------

    def run_predict(self, model: GuestModel, dataset: PartyDataset) -> np.ndarray:
        """Federated inference; margins come back in ``dataset``'s row order.

        Rows outside the cross-party id intersection get NaN margins.
        """
        original_ids = list(dataset.instance_ids)
        self.dataset = dataset
        self._align_ids()
        n = self.dataset.n_instances
        edges = model.bin_edges
        dense = (
            np.stack(
                [bin_values(edges[f], self.dataset.features[:, f]) for f in range(len(edges))],
                axis=1,
            )
            if len(edges)
            else np.zeros((n, 0), dtype=np.int64)
        )
        if model.objective == "multiclass":
            margins = np.zeros((n, model.n_classes))
        else:
            margins = np.zeros(n)
        lr = model.learning_rate
        for tree_index, (tree, meta) in enumerate(zip(model.trees, model.tree_meta)):
            _epoch, class_index = meta
            frontier = {0: np.arange(n, dtype=np.int64)}
            while frontier:
                node_id = min(frontier)
                idx = frontier.pop(node_id)
                node = tree.nodes[node_id]
                if len(idx) == 0:
                    continue
                if node.is_leaf:
                    if node.weight is None:
                        continue
                    if model.multi_output:
                        margins[idx] += lr * np.asarray(node.weight)
                    elif model.objective == "multiclass":
                        margins[idx, class_index] += lr * node.weight
                    else:
                        margins[idx] += lr * node.weight
                    continue
                if node.owner_rank == 0:
                    left = dense[idx, node.feature] <= node.bin_index
                else:
                    self.transport.send(
                        node.owner_rank,
                        self._msg(
                            MessageKind.PREDICT_QUERY,
                            encode_predict_query(tree_index, node_id, node.split_id, idx),
                        ),
                    )
                    reply = self.transport.recv(node.owner_rank, MessageKind.PREDICT_ROUTE)
                    got_tree, got_node, left = decode_predict_route(reply.payload)
                    if got_tree != tree_index or got_node != node_id:
                        raise ProtocolError("routing reply does not match the query")
                    if left.shape[0] != idx.shape[0]:
                        raise ProtocolError("routing reply has the wrong width")
                frontier[node.left] = idx[left]
                frontier[node.right] = idx[~left]
        self._broadcast(self.host_ranks, MessageKind.SESSION_END, encode_session_end())
        pos = {str(v): k for k, v in enumerate(original_ids)}
        out = np.full((len(original_ids),) + margins.shape[1:], np.nan)
        for j, v in enumerate(self.dataset.instance_ids):
            out[pos[str(v)]] = margins[j]
        return out
