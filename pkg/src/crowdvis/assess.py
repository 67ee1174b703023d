"""Screen-space visibility accounting from the ID buffer.

For every group, the instances split into three disjoint classes: hidden by
sparsification, actually visible on screen (their ID appears in the buffer),
and occluded (visible by sparsification but covered by other instances).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StaleEpochError
from .grouping import GroupAssignment
from .voldata import InstanceTable


@dataclass(frozen=True)
class GroupReportRow:
    group: int
    total: int
    hidden_by_sparsification: int
    visible_on_screen: int
    occluded: int

    def to_json(self) -> dict:
        return {
            "group": self.group,
            "total": self.total,
            "hidden": self.hidden_by_sparsification,
            "visible": self.visible_on_screen,
            "occluded": self.occluded,
        }


@dataclass(frozen=True)
class GroupVisibilityReport:
    rows: tuple[GroupReportRow, ...]
    epoch: int
    camera_hash: str

    def row(self, k: int) -> GroupReportRow:
        for r in self.rows:
            if r.group == k:
                return r
        raise KeyError(f"no group {k} in report")

    def to_json(self) -> dict:
        return {
            "epoch": self.epoch,
            "cameraHash": self.camera_hash,
            "groups": [r.to_json() for r in self.rows],
        }


def assess_visibility(
    id_frame,
    assignment: GroupAssignment,
    table: InstanceTable,
    expected_epoch: int | None = None,
) -> GroupVisibilityReport:
    """Count unique on-screen IDs per group and derive the occluded remainder.

    ``id_frame`` is any object with ``ids`` (int array), ``epoch`` and
    ``camera_hash``. A buffer from a different sparsification epoch is refused.
    """
    if expected_epoch is not None and id_frame.epoch != expected_epoch:
        raise StaleEpochError(
            f"id buffer is from epoch {id_frame.epoch}, expected {expected_epoch}"
        )
    on_screen = np.unique(id_frame.ids)
    on_screen = on_screen[on_screen > 0]
    seen_per_group: dict[int, int] = {}
    for iid in on_screen:
        k = assignment.group_of.get(int(iid), 0)
        if k > 0:
            seen_per_group[k] = seen_per_group.get(k, 0) + 1

    rows = []
    for k in range(1, assignment.n_groups + 1):
        members = assignment.members(k)
        total = len(members)
        hidden = sum(1 for i in members if not table.visible[i])
        visible_on_screen = seen_per_group.get(k, 0)
        occluded = total - hidden - visible_on_screen
        if occluded < 0:
            raise RuntimeError(
                f"group {k}: visible ids on screen exceed sparsification-visible members"
            )
        rows.append(
            GroupReportRow(
                group=k,
                total=total,
                hidden_by_sparsification=hidden,
                visible_on_screen=visible_on_screen,
                occluded=occluded,
            )
        )
    return GroupVisibilityReport(
        rows=tuple(rows), epoch=id_frame.epoch, camera_hash=id_frame.camera_hash
    )
