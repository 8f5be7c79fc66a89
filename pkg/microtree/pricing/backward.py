"""
트리 역진 귀납 가격결정

V(말단) = payoff(S_N)
V(s) = e^{-rΔt}·[p·V(up) + (1-p)·V(down)]
"""

import logging
import math
import time

import numpy as np

from microtree.errors import SpecMismatchError
from microtree.lattice.builder import PricingTree
from microtree.pricing.options import OptionSpec, PricingResult, check_maturity, payoff

logger = logging.getLogger(__name__)


def backward_values(tree: PricingTree, spec: OptionSpec) -> np.ndarray:
    """모든 노드의 옵션 가치"""
    values = np.empty(tree.n_nodes, dtype="float64")
    values[tree.level_slice(tree.N)] = payoff(spec, tree.terminal_prices())
    disc = math.exp(-tree.r * tree.dt)
    for level in range(tree.N - 1, -1, -1):
        s = tree.level_slice(level)
        p = tree.p_up[s]
        values[s] = disc * (p * values[tree.up_child[s]] + (1.0 - p) * values[tree.down_child[s]])
    return values


def price_tree(tree: PricingTree, spec: OptionSpec) -> PricingResult:
    """
    역진 귀납으로 루트 가치 계산

    Raises:
        SpecMismatchError: 만기 또는 이자율이 트리와 맞지 않음
    """
    check_maturity(spec, tree.N, tree.dt)
    if not math.isclose(spec.rate, tree.r, rel_tol=1e-9, abs_tol=1e-15):
        raise SpecMismatchError(f"옵션 이자율 {spec.rate}이 트리 이자율 {tree.r}과 다릅니다")
    started = time.perf_counter()
    values = backward_values(tree, spec)
    elapsed = time.perf_counter() - started
    price = max(float(values[0]), 0.0)
    logger.info(f"트리 가격: {spec.kind} K={spec.strike} → {price:.6f} ({elapsed * 1000:.2f}ms)")
    return PricingResult(
        price=price,
        method="tree",
        n_steps=tree.N,
        diagnostics={
            "node_count": float(tree.n_nodes),
            "build_seconds": tree.build_seconds,
            "pricing_seconds": elapsed,
        },
    )
