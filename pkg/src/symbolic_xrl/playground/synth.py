"""Synthetic A1 (slicing/scheduling) traces for exercising the A1 schema."""

from __future__ import annotations

import numpy as np

from ..core import SchemaA1, Step

# rough per-slice KPI scales: (tx_brate Mbps, tx_pkts, dl_buffer bytes)
_SCALES = {
    "embb": (4.0, 400.0, 60_000.0),
    "mmtc": (0.2, 40.0, 2_000.0),
    "urllc": (0.8, 120.0, 8_000.0),
}


def synth_trace_a1(seed: int, T: int, schema: SchemaA1 | None = None, regime_length: int = 50) -> list[Step]:
    """Piecewise-stationary KPI regimes with random PRB splits and policies."""
    schema = schema or SchemaA1()
    rng = np.random.default_rng(seed)
    steps = []
    level = None
    prb = None
    for t in range(T):
        if t % regime_length == 0:
            level = rng.uniform(0.3, 1.5, size=(len(schema.slices), len(schema.kpis)))
        if prb is None or rng.random() < 0.3:
            cuts = np.sort(rng.choice(np.arange(1, schema.prb_total), size=2, replace=False))
            prb = [int(cuts[0]), int(cuts[1] - cuts[0]), int(schema.prb_total - cuts[1])]
        policy = [schema.policies[i] for i in rng.integers(len(schema.policies), size=len(schema.slices))]
        state = {}
        for k_i, k in enumerate(schema.kpis):
            rows = []
            for l_i, sl in enumerate(schema.slices):
                share = prb[l_i] / schema.prb_total
                mean = _SCALES[sl][k_i] * level[l_i, k_i] * (0.5 + share)
                vals = np.maximum(0.0, rng.normal(mean, 0.15 * mean, size=schema.measurements))
                rows.append([round(float(v), 6) for v in vals])
            state[k] = rows
        reward = float(sum(np.mean(state["tx_brate"][l]) for l in range(len(schema.slices))))
        steps.append(Step(t=t, state=state, action={"prb": list(prb), "policy": policy}, reward=round(reward, 6)))
    return steps
