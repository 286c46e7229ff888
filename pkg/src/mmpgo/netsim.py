"""Synchronous message-passing simulator with communication accounting.

Nodes only talk to graph neighbors. A round delivers all snapshots at once
(barrier semantics) and every inbox is sorted by sender. An optional master
channel sums per-node scalars; protocols that must run without a master (the
decentralized restart) open the bus with ``allow_master=False`` and any
in-band master call raises.
"""

from dataclasses import dataclass, field

import numpy as np

FLOAT_BYTES = 8


class ProtocolViolation(RuntimeError):
    """A message or master call the active protocol does not permit."""


@dataclass(frozen=True)
class NeighborSnapshot:
    """What ``sender`` tells ``receiver`` in one round.

    ``pose_ids`` are the sender's poses on edges shared with the receiver; each
    entry of ``poses`` is one ``(t, R)`` pair of arrays over those ids (e.g. the
    iterate and the extrapolated point). ``scalars`` carries ledger values.
    """

    sender: int
    receiver: int
    pose_ids: np.ndarray
    poses: tuple = ()
    scalars: tuple = ()

    def payload_bytes(self, d):
        n_pose = len(self.pose_ids) * len(self.poses)
        return n_pose * d * (d + 1) * FLOAT_BYTES + len(self.scalars) * FLOAT_BYTES


@dataclass
class CommAccounting:
    rounds: int = 0
    messages: int = 0
    bytes: int = 0
    master_calls: int = 0
    round_messages: list = field(default_factory=list)
    round_bytes: list = field(default_factory=list)


class Bus:
    """Neighbor bus for one distributed pose graph.

    Parameters
    ----------
    dgraph : DistributedPoseGraph
    allow_master : bool
        Whether in-band :meth:`master_aggregate` calls are legal.
    """

    def __init__(self, dgraph, allow_master=True):
        self.dgraph = dgraph
        self.allow_master = allow_master
        self.accounting = CommAccounting()
        self.links = sorted(dgraph.boundary)  # ordered neighbor pairs

    def snapshots(self, poses=(), scalars=None):
        """Outboxes carrying the boundary poses of each stack in ``poses``.

        ``scalars`` maps an ordered pair ``(sender, receiver)`` to a tuple of
        floats.
        """
        out = {}
        for a, b in self.links:
            ids = self.dgraph.boundary[(a, b)]
            pose_data = tuple((P.t[ids].copy(), P.R[ids].copy()) for P in poses)
            sc = tuple(float(v) for v in (scalars or {}).get((a, b), ()))
            out.setdefault(a, []).append(NeighborSnapshot(a, b, ids, pose_data, sc))
        return out

    def round_exchange(self, outboxes):
        """Deliver every snapshot in one synchronous round.

        Parameters
        ----------
        outboxes : dict
            ``sender -> list of NeighborSnapshot``.

        Returns
        -------
        dict
            ``receiver -> list of NeighborSnapshot`` sorted by sender.
        """
        d = self.dgraph.d
        inboxes = {a: [] for a in range(self.dgraph.n_nodes)}
        n_msg = 0
        n_bytes = 0
        for sender in sorted(outboxes):
            for snap in outboxes[sender]:
                if snap.sender != sender:
                    raise ProtocolViolation(f"snapshot from {snap.sender} placed in outbox of {sender}")
                if (snap.sender, snap.receiver) not in self.dgraph.boundary:
                    raise ProtocolViolation(f"node {snap.sender} is not a neighbor of node {snap.receiver}")
                inboxes[snap.receiver].append(snap)
                n_msg += 1
                n_bytes += snap.payload_bytes(d)
        for box in inboxes.values():
            box.sort(key=lambda s: s.sender)
        acc = self.accounting
        acc.rounds += 1
        acc.messages += n_msg
        acc.bytes += n_bytes
        acc.round_messages.append(n_msg)
        acc.round_bytes.append(n_bytes)
        return inboxes

    def master_aggregate(self, values, out_of_band=False):
        """Left-fold sum of per-node scalars at the master.

        Out-of-band calls (metrics) are free and always allowed; in-band calls
        count toward ``master_calls`` and are forbidden when the bus was opened
        without a master.
        """
        if not out_of_band:
            if not self.allow_master:
                raise ProtocolViolation("this protocol runs without a master node")
            self.accounting.master_calls += 1
        total = 0.0
        for v in values:
            total += float(v)
        return total


def round_exchange(bus, outboxes):
    return bus.round_exchange(outboxes)


def master_aggregate(bus, values, out_of_band=False):
    return bus.master_aggregate(values, out_of_band=out_of_band)
