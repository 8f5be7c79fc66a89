"""
상태 의존 동학 Monte Carlo 가격결정

경로는 트리와 같은 StateTransitionRule로 상태를 전이하고 p_MMM으로 이동을 뽑습니다.
경로는 10,000개 단위 청크로 나누고 청크 c는 SeedSequence([seed, c])로 시드하므로
n_jobs와 무관하게 같은 추정치가 나옵니다.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Tuple

import numpy as np

from microtree.calibration.states import StateTable
from microtree.errors import ConfigError, DomainError, ResourceLimitError, SpecMismatchError
from microtree.lattice.transition import DEFAULT_HISTORY_LENGTH, StateTransitionRule
from microtree.pricing.options import OptionSpec, PricingResult, check_maturity, payoff

logger = logging.getLogger(__name__)

CHUNK_PATHS = 10_000
MIN_PATHS = 100
DEFAULT_STEP_CAP = 500_000_000


def _simulate_chunk(
    rule: StateTransitionRule,
    S0: float,
    spec: OptionSpec,
    N: int,
    n_paths: int,
    seed: int,
    chunk: int,
    root_state: int,
) -> np.ndarray:
    """청크 하나의 할인 전 페이오프"""
    rng = np.random.default_rng(np.random.SeedSequence([seed, chunk]))
    price = np.full(n_paths, float(S0))
    state = np.full(n_paths, root_state, dtype=np.int64)
    for _ in range(N):
        up = rng.random(n_paths) < rule.p_up[state]
        price *= np.where(up, rule.u[state], rule.d[state])
        state = rule.next_states(state, up.astype(np.int64))
    return np.asarray(payoff(spec, price), dtype="float64")


def chunk_sizes(M: int) -> Tuple[int, ...]:
    full, rest = divmod(M, CHUNK_PATHS)
    return (CHUNK_PATHS,) * full + ((rest,) if rest else ())


def price_monte_carlo(
    table: StateTable,
    S0: float,
    spec: OptionSpec,
    N: int,
    M: int,
    seed: int,
    root_p_hint: float = 0.5,
    epsilon: float = 0.0,
    history_length: int = DEFAULT_HISTORY_LENGTH,
    step_cap: int = DEFAULT_STEP_CAP,
    n_jobs: int = 1,
) -> PricingResult:
    """
    Monte Carlo 가격: e^{-rT}·mean(payoff), std_error = 표본표준편차/√M

    Raises:
        ConfigError: M < 100 또는 N < 1
        DomainError: S0 <= 0
        ResourceLimitError: M·N > step_cap
        SpecMismatchError: 만기 또는 이자율이 상태 테이블과 맞지 않음
    """
    if N < 1:
        raise ConfigError(f"스텝 수는 1 이상이어야 합니다: N={N}")
    if M < MIN_PATHS:
        raise ConfigError(f"경로 수는 {MIN_PATHS} 이상이어야 합니다: M={M}")
    if not S0 > 0.0:
        raise DomainError(f"S0는 양수여야 합니다: {S0}")
    if M * N > step_cap:
        raise ResourceLimitError(f"경로 × 스텝 {M * N:,}이 상한 {step_cap:,}을 넘습니다")
    check_maturity(spec, N, table.dt_tree)
    if not math.isclose(spec.rate, table.r, rel_tol=1e-9, abs_tol=1e-15):
        raise SpecMismatchError(f"옵션 이자율 {spec.rate}이 상태 테이블 이자율 {table.r}과 다릅니다")

    started = time.perf_counter()
    rule = StateTransitionRule(table, epsilon=epsilon, history_length=history_length)
    root_state = rule.root_state(root_p_hint)
    sizes = chunk_sizes(M)

    def run(c: int) -> np.ndarray:
        return _simulate_chunk(rule, S0, spec, N, sizes[c], seed, c, root_state)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(c) for c in range(len(sizes))]

    disc = math.exp(-table.r * N * table.dt_tree)
    discounted = disc * np.concatenate(parts)
    price = float(discounted.mean())
    std_error = float(discounted.std(ddof=1) / math.sqrt(M))
    elapsed = time.perf_counter() - started
    logger.info(f"Monte Carlo 가격: {price:.6f} ± {std_error:.6f} (M={M:,}, N={N}, {elapsed:.2f}s)")
    return PricingResult(
        price=max(price, 0.0),
        method="mc",
        n_steps=N,
        n_paths=M,
        std_error=std_error,
        diagnostics={"pricing_seconds": elapsed, "root_state": float(root_state)},
    )
