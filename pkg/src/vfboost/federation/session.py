"""All-in-one session drivers: every party as a thread over in-process queues.

The lockstep protocol makes a threaded simulation deterministic; the TCP
path runs the same party state machines over sockets.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from ..data import PartyDataset
from ..errors import VFBoostError
from .guest import GuestParty
from .host import HostParty
from .model import GuestModel, HostModel
from .transport import InProcHub

JOIN_TIMEOUT = 600.0


@dataclass
class SessionResult:
    guest_model: GuestModel
    host_models: dict[int, HostModel]
    log: list[dict]
    cipher_counters: dict[int, dict] = field(default_factory=dict)
    transport_counters: dict[int, dict] = field(default_factory=dict)


def _run_parties(hub: InProcHub, jobs: dict[int, callable]) -> dict[int, object]:
    """Run one callable per rank on threads; re-raise the first party error."""
    results: dict[int, object] = {}
    errors: dict[int, Exception] = {}

    def runner(rank, job):
        try:
            results[rank] = job()
        except Exception as exc:  # propagate across the session
            errors[rank] = exc
            hub.abort(exc)

    threads = [
        threading.Thread(target=runner, args=(rank, job), name=f"party-{rank}")
        for rank, job in jobs.items()
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join(JOIN_TIMEOUT)
    if errors:
        rank = sorted(errors)[0]
        exc = errors[rank]
        if isinstance(exc, VFBoostError):
            raise exc
        raise VFBoostError(f"party {rank} failed: {exc!r}") from exc
    return results


def run_inproc_training(config, datasets: list[PartyDataset]) -> SessionResult:
    """Train with all parties in-process.  ``datasets[k]`` belongs to rank k."""
    n_parties = config.n_hosts + 1
    if len(datasets) != n_parties:
        raise VFBoostError(f"expected {n_parties} datasets, got {len(datasets)}")
    hub = InProcHub(n_parties, config.session_id)
    guest = GuestParty(config, datasets[0], hub.transport(0))
    hosts = {
        rank: HostParty(rank, config.session_id, datasets[rank], hub.transport(rank))
        for rank in range(1, n_parties)
    }
    jobs = {0: guest.run_train}
    jobs.update({rank: host.run_train for rank, host in hosts.items()})
    results = _run_parties(hub, jobs)

    cipher = {0: guest.key_pair.public_key.counters.as_dict()}
    transport = {0: guest.transport.counters.as_dict()}
    for rank, host in hosts.items():
        # host-side homomorphic work is counted on its reconstructed key handle
        cipher[rank] = host.cipher_counters.as_dict()
        transport[rank] = host.transport.counters.as_dict()
    return SessionResult(
        guest_model=results[0],
        host_models={rank: results[rank] for rank in hosts},
        log=list(guest.log),
        cipher_counters=cipher,
        transport_counters=transport,
    )


def run_inproc_prediction(
    config,
    guest_model: GuestModel,
    host_models: dict[int, HostModel],
    datasets: list[PartyDataset],
) -> np.ndarray:
    """Federated inference with all parties in-process; returns raw margins."""
    n_parties = config.n_hosts + 1
    hub = InProcHub(n_parties, config.session_id)
    guest = GuestParty(config, _with_dummy_labels(datasets[0]), hub.transport(0))
    jobs = {0: lambda: guest.run_predict(guest_model, _with_dummy_labels(datasets[0]))}
    for rank in range(1, n_parties):
        host = HostParty(rank, config.session_id, datasets[rank], hub.transport(rank))
        jobs[rank] = (lambda h=host, r=rank: h.run_predict(host_models[r]))
    results = _run_parties(hub, jobs)
    return results[0]


def _with_dummy_labels(ds: PartyDataset) -> PartyDataset:
    if ds.labels is not None:
        return ds
    return PartyDataset(
        instance_ids=list(ds.instance_ids),
        features=ds.features,
        feature_names=list(ds.feature_names),
        labels=np.zeros(ds.n_instances),
    )
