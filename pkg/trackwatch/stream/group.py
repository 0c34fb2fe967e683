import itertools
from dataclasses import dataclass
from typing import Dict, List, Tuple

from loguru import logger

from .common import StreamConfigError

__all__ = ("OperatorGroup", "Handoff", "rebalance")


@dataclass(frozen=True)
class Handoff:
    """Partition `partition` moves from replica `source` to replica `target`."""

    partition: int
    source: int
    target: int


@dataclass(frozen=True)
class OperatorGroup:
    """`assignment[p]` is the replica owning partition p."""

    replicas: int
    assignment: Tuple[int, ...]

    def __post_init__(self):
        if self.replicas < 1:
            raise StreamConfigError(f"need at least one replica, got {self.replicas}")
        if self.replicas > len(self.assignment):
            raise StreamConfigError(f"{self.replicas} replicas for {len(self.assignment)} partitions")
        for partition, replica in enumerate(self.assignment):
            if not 0 <= replica < self.replicas:
                raise StreamConfigError(f"partition {partition} assigned to unknown replica {replica}")

    @classmethod
    def create(cls, n_partitions: int, replicas: int) -> "OperatorGroup":
        return cls(replicas=replicas, assignment=_round_robin(n_partitions, replicas))

    @property
    def n_partitions(self) -> int:
        return len(self.assignment)

    def partitions_of(self, replica: int) -> List[int]:
        return [p for p, owner in enumerate(self.assignment) if owner == replica]

    def owners(self) -> Dict[int, List[int]]:
        return {r: self.partitions_of(r) for r in range(self.replicas)}


def _round_robin(n_partitions: int, replicas: int) -> Tuple[int, ...]:
    members = itertools.cycle(range(replicas))
    return tuple(next(members) for _ in range(n_partitions))


def rebalance(group: OperatorGroup, new_replica_count: int) -> Tuple[OperatorGroup, List[Handoff]]:
    """
    Reassigns partitions round-robin over `new_replica_count` replicas and
    lists the partitions whose owner changes. The caller ships each moved
    partition's state to its new owner before that owner consumes.
    """
    if new_replica_count < 1:
        raise StreamConfigError(f"need at least one replica, got {new_replica_count}")
    new_group = OperatorGroup.create(group.n_partitions, new_replica_count)
    plan = [
        Handoff(partition=p, source=old, target=new)
        for p, (old, new) in enumerate(zip(group.assignment, new_group.assignment))
        if old != new
    ]
    logger.info(f"Rebalance {group.replicas} -> {new_replica_count} replicas moves {len(plan)} partitions.")
    return new_group, plan
