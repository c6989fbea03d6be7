"""Command-line operator surface.

Subcommands:

* ``train``          train a session (all parties in-process, or one party
                     of a TCP session with ``--party``)
* ``predict``        federated inference with saved model shards
* ``eval``           predict on the configured data and report AUC/accuracy
* ``cost-estimate``  closed-form baseline/optimized operation counts
* ``keygen``         generate a key pair artifact (testing utility)

Exit codes: 0 ok, 2 configuration/data error, 3 protocol/transport error,
4 crypto error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .config import TrainConfig, load_config
from .costmodel import CostParams, cost_report
from .data import PartyDataset, load_csv, load_libsvm
from .encoding import compress_capacity, compute_pack_state
from .errors import ConfigError, VFBoostError
from .federation.guest import GuestParty
from .federation.host import HostParty
from .federation.model import GuestModel, HostModel, shard_filename
from .federation.session import run_inproc_prediction, run_inproc_training
from .federation.transport import SocketTransport
from .losses import sigmoid, softmax
from .metrics import accuracy_score, auc_score
from .paillier import keygen


def _load_party_data(cfg: TrainConfig, rank: int) -> PartyDataset:
    spec = cfg.parties[rank]
    loader = load_csv if spec.format == "csv" else load_libsvm
    return loader(spec.data, has_labels=(rank == 0))


def _parse_party(text: str, n_parties: int) -> int:
    if text == "guest":
        return 0
    if text.startswith("host:"):
        rank = int(text.split(":", 1)[1])
        if not 1 <= rank < n_parties:
            raise ConfigError(f"host rank {rank} out of range")
        return rank
    raise ConfigError(f"--party must be 'guest' or 'host:<k>', got {text!r}")


def _socket_transport(cfg: TrainConfig, rank: int) -> SocketTransport:
    addresses = {}
    for k, spec in enumerate(cfg.parties):
        if not spec.address:
            raise ConfigError(f"tcp transport needs an address for party {k}")
        addresses[k] = spec.host_port()
    return SocketTransport(rank, cfg.session_id, addresses)


def _write_json(path: str, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    os.makedirs(cfg.output_dir, exist_ok=True)
    if cfg.transport == "inproc":
        datasets = [_load_party_data(cfg, k) for k in range(cfg.n_hosts + 1)]
        result = run_inproc_training(cfg, datasets)
        with open(os.path.join(cfg.output_dir, shard_filename(0)), "w") as fh:
            fh.write(result.guest_model.to_json())
        for rank, model in result.host_models.items():
            with open(os.path.join(cfg.output_dir, shard_filename(rank)), "w") as fh:
                fh.write(model.to_json())
        _write_json(
            os.path.join(cfg.output_dir, "train_log.json"),
            {
                "log": result.log,
                "cipher_counters": result.cipher_counters,
                "transport_counters": result.transport_counters,
            },
        )
        final = result.log[-1] if result.log else {}
        print(
            f"trained {len(result.guest_model.trees)} trees; "
            f"final loss={final.get('loss'):.6f} metric={final.get('metric'):.6f}"
        )
        print(f"artifacts written to {cfg.output_dir}")
        return 0
    # tcp: run exactly one party of the mesh
    if not args.party:
        raise ConfigError("tcp transport requires --party guest|host:<k>")
    rank = _parse_party(args.party, cfg.n_hosts + 1)
    transport = _socket_transport(cfg, rank)
    try:
        dataset = _load_party_data(cfg, rank)
        if rank == 0:
            guest = GuestParty(cfg, dataset, transport)
            model = guest.run_train()
            with open(os.path.join(cfg.output_dir, shard_filename(0)), "w") as fh:
                fh.write(model.to_json())
            _write_json(
                os.path.join(cfg.output_dir, "train_log.json"),
                {
                    "log": guest.log,
                    "cipher_counters": {0: guest.key_pair.public_key.counters.as_dict()},
                    "transport_counters": {0: transport.counters.as_dict()},
                },
            )
        else:
            host = HostParty(rank, cfg.session_id, dataset, transport)
            model = host.run_train()
            with open(os.path.join(cfg.output_dir, shard_filename(rank)), "w") as fh:
                fh.write(model.to_json())
        print(f"party rank {rank}: shard written to {cfg.output_dir}")
        return 0
    finally:
        transport.close()


def _load_models(cfg: TrainConfig, model_dir: str):
    with open(os.path.join(model_dir, shard_filename(0))) as fh:
        guest_model = GuestModel.from_json(fh.read())
    host_models = {}
    for rank in range(1, cfg.n_hosts + 1):
        with open(os.path.join(model_dir, shard_filename(rank))) as fh:
            host_models[rank] = HostModel.from_json(fh.read())
    return guest_model, host_models


def _margins_to_rows(ids, margins, objective):
    rows = []
    if margins.ndim == 1:
        prob = sigmoid(margins)
        for i, v in enumerate(ids):
            rows.append((v, f"{margins[i]!r}", f"{prob[i]!r}"))
        header = "id,margin,probability"
    else:
        prob = softmax(margins)
        labels = np.argmax(margins, axis=1)
        for i, v in enumerate(ids):
            cell = ";".join(repr(x) for x in margins[i])
            rows.append((v, cell, str(int(labels[i]))))
        header = "id,margins,label"
    return header, rows


def cmd_predict(args) -> int:
    cfg = load_config(args.config)
    guest_model, host_models = _load_models(cfg, args.model_dir)
    if cfg.transport == "inproc":
        datasets = [_load_party_data(cfg, k) for k in range(cfg.n_hosts + 1)]
        margins = run_inproc_prediction(cfg, guest_model, host_models, datasets)
        header, rows = _margins_to_rows(datasets[0].instance_ids, margins, cfg.objective)
        out = args.out or os.path.join(cfg.output_dir, "scores.csv")
        with open(out, "w") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(str(c) for c in row) + "\n")
        print(f"scores written to {out}")
        return 0
    if not args.party:
        raise ConfigError("tcp transport requires --party guest|host:<k>")
    rank = _parse_party(args.party, cfg.n_hosts + 1)
    transport = _socket_transport(cfg, rank)
    try:
        dataset = _load_party_data(cfg, rank)
        if rank == 0:
            guest = GuestParty(cfg, _ensure_labels(dataset), transport)
            margins = guest.run_predict(guest_model, _ensure_labels(dataset))
            header, rows = _margins_to_rows(dataset.instance_ids, margins, cfg.objective)
            out = args.out or os.path.join(cfg.output_dir, "scores.csv")
            with open(out, "w") as fh:
                fh.write(header + "\n")
                for row in rows:
                    fh.write(",".join(str(c) for c in row) + "\n")
            print(f"scores written to {out}")
        else:
            HostParty(rank, cfg.session_id, dataset, transport).run_predict(
                host_models[rank]
            )
        return 0
    finally:
        transport.close()


def _ensure_labels(ds: PartyDataset) -> PartyDataset:
    if ds.labels is not None:
        return ds
    return PartyDataset(
        instance_ids=list(ds.instance_ids),
        features=ds.features,
        feature_names=list(ds.feature_names),
        labels=np.zeros(ds.n_instances),
    )


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    if cfg.transport != "inproc":
        raise ConfigError("eval runs the whole session in-process; use transport: inproc")
    guest_model, host_models = _load_models(cfg, args.model_dir)
    datasets = [_load_party_data(cfg, k) for k in range(cfg.n_hosts + 1)]
    margins = run_inproc_prediction(cfg, guest_model, host_models, datasets)
    labels = datasets[0].labels
    keep = (
        ~np.isnan(margins) if margins.ndim == 1 else ~np.isnan(margins).any(axis=1)
    )
    if cfg.objective == "multiclass":
        metrics = {
            "accuracy": accuracy_score(labels[keep], np.argmax(margins[keep], axis=1))
        }
    else:
        metrics = {"auc": auc_score(labels[keep], margins[keep])}
    print(json.dumps(metrics, sort_keys=True))
    return 0


def cmd_cost_estimate(args) -> int:
    capacity = args.capacity
    if capacity is None:
        # Derive from the key and a worst-case logistic-loss epoch.
        iota = args.key_bits - 1
        g = np.array([-1.0, 1.0] * max(1, args.instances // 2))[: max(2, args.instances)]
        h = np.full_like(g, 0.25 if args.hessian_max is None else args.hessian_max)
        state = compute_pack_state(g, h, r=args.precision, iota=iota,
                                   n_instances=args.instances)
        capacity = compress_capacity(iota, state.b_gh)
        print(
            f"derived packing: b_g={state.b_g} b_h={state.b_h} b_gh={state.b_gh} "
            f"capacity={capacity} (key_bits={args.key_bits}, r={args.precision})"
        )
    params = CostParams(
        n_instances=args.instances,
        n_features=args.features,
        n_bins=args.bins,
        height=args.depth,
        compress_capacity=capacity,
    )
    print(cost_report(params))
    return 0


def cmd_keygen(args) -> int:
    kp = keygen(args.bits, rng_seed=args.seed)
    doc = {
        "key_bits": kp.key_bits,
        "public": {"n": hex(kp.public_key.n), "g": hex(kp.public_key.g)},
        "secret": {"lambda": hex(kp.secret_key.lam), "mu": hex(kp.secret_key.mu)},
        "fingerprint": kp.public_key.fingerprint,
        "max_plaintext_bits": kp.public_key.max_plaintext_bits,
    }
    if args.out:
        _write_json(args.out, doc)
        print(f"key pair written to {args.out} (fingerprint {doc['fingerprint']})")
    else:
        print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vfboost",
        description="Vertical federated gradient boosting over Paillier ciphertexts",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a federated session")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--party", help="tcp mode: guest or host:<k>")
    p_train.set_defaults(func=cmd_train)

    p_pred = sub.add_parser("predict", help="federated inference")
    p_pred.add_argument("--config", required=True)
    p_pred.add_argument("--model-dir", required=True)
    p_pred.add_argument("--out")
    p_pred.add_argument("--party", help="tcp mode: guest or host:<k>")
    p_pred.set_defaults(func=cmd_predict)

    p_eval = sub.add_parser("eval", help="evaluate a model on the configured data")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--model-dir", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_cost = sub.add_parser("cost-estimate", help="closed-form cost table")
    p_cost.add_argument("--instances", type=int, required=True)
    p_cost.add_argument("--features", type=int, required=True)
    p_cost.add_argument("--bins", type=int, default=32)
    p_cost.add_argument("--depth", type=int, default=5)
    p_cost.add_argument("--capacity", type=int, default=None,
                        help="compressed split infos per ciphertext (derived if omitted)")
    p_cost.add_argument("--key-bits", type=int, default=1024)
    p_cost.add_argument("--precision", type=int, default=53)
    p_cost.add_argument("--hessian-max", type=float, default=None)
    p_cost.set_defaults(func=cmd_cost_estimate)

    p_key = sub.add_parser("keygen", help="generate a key pair artifact")
    p_key.add_argument("--bits", type=int, default=1024)
    p_key.add_argument("--seed", type=int, default=None)
    p_key.add_argument("--out")
    p_key.set_defaults(func=cmd_keygen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VFBoostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
