"""Twin synchronization: per-key last-writer-wins merge across facets.

The merge is a classic LWW register per (facet, key): commutative,
associative, idempotent, so any delivery order (including duplicates)
converges to the clock-maximum write.  Mirror propagation reuses the
originating clock, which keeps both facets bytewise identical after sync
and preserves idempotent replay.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import HybridObject, VersionedValue, clock_compare


@dataclass(frozen=True)
class WriteOutcome:
    """Result of apply_write: applied (with changed keys), superseded, or rejected.

    superseded means the write lost the LWW merge (stale clock); rejected
    means schema or policy refused it and no state changed at all.
    """

    status: str  # "applied" | "superseded" | "rejected"
    changed_keys: tuple[str, ...] = ()
    reason: str | None = None  # rejection code: "schema-mismatch" | "policy-rejected"
    detail: str | None = None
    propagated: tuple[tuple[str, str, VersionedValue], ...] = ()

    @property
    def applied(self) -> bool:
        return self.status == "applied"


@dataclass(frozen=True)
class DivergenceReport:
    object_id: str
    diverged_keys: frozenset[str]
    staleness_ms: int


def merge_lww(existing: VersionedValue | None,
              incoming: VersionedValue) -> tuple[VersionedValue, bool]:
    """LWW register merge: incoming wins iff its clock is strictly greater.

    Equal clocks keep the existing entry (idempotent redelivery).
    Returns (kept, changed).
    """
    if existing is None or clock_compare(existing.clock, incoming.clock) < 0:
        return incoming, True
    return existing, False


_OPPOSITE = {"physical": "virtual", "virtual": "physical"}


def _rejected(reason: str, detail: str) -> WriteOutcome:
    return WriteOutcome(status="rejected", reason=reason, detail=detail)


def _gate(obj: HybridObject, facet: str, key: str,
          vv: VersionedValue) -> WriteOutcome | None:
    kind = obj.schema.get(key)
    if kind is None:
        return _rejected("schema-mismatch", f"{obj.object_id} has no key {key!r}")
    if not kind.admits(vv.value):
        return _rejected("schema-mismatch",
                         f"{obj.object_id}.{key}: value {vv.value!r} does not "
                         f"match kind {kind.kind}")
    if obj.obj_class == "physical-only" and facet == "virtual":
        return _rejected("policy-rejected",
                         f"{obj.object_id} is physical-only; no virtual facet")
    if obj.obj_class == "virtual-only" and facet == "physical":
        return _rejected("policy-rejected",
                         f"{obj.object_id} is virtual-only; no physical facet")
    if key in obj.mirror_keys:
        if obj.sync_policy == "physical-authoritative" and facet == "virtual":
            return _rejected("policy-rejected",
                             f"mirror key {key!r} is physical-authoritative")
        if obj.sync_policy == "virtual-authoritative" and facet == "physical":
            return _rejected("policy-rejected",
                             f"mirror key {key!r} is virtual-authoritative")
    return None


def _propagates(obj: HybridObject, key: str) -> bool:
    return key in obj.mirror_keys and obj.sync_policy != "decoupled"


def apply_write(obj: HybridObject, facet: str, key: str,
                vv: VersionedValue) -> WriteOutcome:
    """Gate a write by schema and policy, merge it, propagate to the mirror.

    Admitted writes go through merge_lww on the target facet; a changed
    mirror key under a propagating policy carries the same VersionedValue
    (same clock) into the opposite facet.
    """
    rejected = _gate(obj, facet, key, vv)
    if rejected is not None:
        return rejected

    target = obj.facet(facet)
    kept, changed = merge_lww(target.get(key), vv)
    if not changed:
        return WriteOutcome(status="superseded")
    target[key] = kept

    propagated: list[tuple[str, str, VersionedValue]] = []
    if _propagates(obj, key):
        other = _OPPOSITE[facet]
        facet_map = obj.facet(other)
        kept2, changed2 = merge_lww(facet_map.get(key), vv)
        if changed2:
            facet_map[key] = kept2
            propagated.append((other, key, kept2))
    return WriteOutcome(status="applied", changed_keys=(key,),
                        propagated=tuple(propagated))


def diverged_keys(obj: HybridObject) -> frozenset[str]:
    """Mirror keys whose facets disagree on value or where exactly one side is set."""
    out = set()
    for key in obj.mirror_keys:
        p = obj.physical_facet.get(key)
        v = obj.virtual_facet.get(key)
        if p is None and v is None:
            continue
        if p is None or v is None or p.value != v.value:
            out.add(key)
    return frozenset(out)


def note_coherence(obj: HybridObject, now_ms: int) -> None:
    """Record the time of observed mirror agreement; call after applied writes."""
    if not diverged_keys(obj):
        obj.last_coherent_ms = now_ms


def divergence(obj: HybridObject, now_ms: int) -> DivergenceReport:
    """Current divergence plus staleness (time since the facets last agreed)."""
    keys = diverged_keys(obj)
    staleness = 0 if not keys else max(0, now_ms - obj.last_coherent_ms)
    return DivergenceReport(obj.object_id, keys, staleness)
