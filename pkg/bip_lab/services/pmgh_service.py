from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..config import settings
from ..exceptions import InputError
from ..models import (
    CheckReport,
    CheckResult,
    EmbeddedSpace,
    FiniteMetricMeasureSpace,
    ProbMeasure,
    ProfileFunction,
    TransferResult,
)
from .base import BaseService
from .curvature_service import curvature_service
from .interpolation_service import interpolation_service, union_diameter
from .transport_service import check_exponent, transport_service


class PmghService(BaseService):
    """pmGH 稳定性服务类

    所有空间都以单射嵌入公共的有限环境空间（外在模型），不做嵌入搜索。
    """

    def _check_embedding(self, embedded: EmbeddedSpace,
                         ambient: FiniteMetricMeasureSpace, name: str) -> None:
        if max(embedded.embedding) >= ambient.n:
            raise InputError(f"{name} 的嵌入超出环境空间点数 {ambient.n}")

    def _ambient_measure(self, embedded: EmbeddedSpace, mass: np.ndarray,
                         ambient: FiniteMetricMeasureSpace) -> ProbMeasure:
        return transport_service.pushforward(embedded.embedding,
                                             ProbMeasure.from_weights(mass), ambient.n)

    def pmgh_transfer(self, target: EmbeddedSpace, limit: EmbeddedSpace,
                      ambient: FiniteMetricMeasureSpace, mu_limit: ProbMeasure,
                      cutoff_eta: Optional[Sequence[float]] = None,
                      q: float = 2.0) -> TransferResult:
        """把极限空间上的测度转移到逼近空间

        z = ∑ η·m，m̃ = η·m / z；α 为环境空间中 m̃_∞ 与 m̃_n 的最优耦合，
        β(x, y) = z_∞ ρ_∞(x) α(x, y)，μ_n 为 β 的第二边缘。
        于是 μ_n ≤ (z_∞/z_n)‖ρ_∞‖ m_n。

        Args:
            target: 逼近空间及其嵌入
            limit: 极限空间及其嵌入
            ambient: 环境空间（只使用其距离）
            mu_limit: 极限空间上的测度
            cutoff_eta: 环境点上取值于 [0, 1] 的截断函数，须在 supp μ_∞ 上为 1，默认恒为 1
            q: 报告 W_q 时的指数

        Returns:
            TransferResult: 转移后的测度、密度与环境度量下的 W_q(μ_∞, μ_n)

        Raises:
            InputError: 截断函数越界、在支撑上不为 1，或在目标空间上质量为零
        """
        check_exponent(q)
        self._check_embedding(target, ambient, "target")
        self._check_embedding(limit, ambient, "limit")
        if mu_limit.n != limit.space.n:
            raise InputError(f"mu_limit 长度 {mu_limit.n} 与极限空间点数 {limit.space.n} 不一致")
        eta = np.ones(ambient.n) if cutoff_eta is None else np.asarray(cutoff_eta, dtype=float)
        if eta.shape != (ambient.n,) or eta.min() < 0 or eta.max() > 1:
            raise InputError("截断函数必须是环境空间上取值于 [0, 1] 的向量")
        limit_idx = np.asarray(limit.embedding)
        target_idx = np.asarray(target.embedding)
        if np.any(np.abs(eta[limit_idx[mu_limit.support]] - 1.0) > settings.STRUCTURE_TOL):
            raise InputError("截断函数在 supp μ_∞ 上必须为 1")

        eta_limit = eta[limit_idx] * limit.space.weight
        eta_target = eta[target_idx] * target.space.weight
        z_limit, z_target = float(eta_limit.sum()), float(eta_target.sum())
        if z_target <= 0:
            raise InputError("截断函数在目标空间上的质量为零")

        source = self._ambient_measure(limit, eta_limit, ambient)
        sink = self._ambient_measure(target, eta_target, ambient)
        alpha = transport_service.wasserstein(ambient, q, source, sink).coupling.plan
        rho_limit = np.zeros(ambient.n)
        rho_limit[limit_idx] = mu_limit.density(limit.space)
        beta = z_limit * rho_limit[:, None] * alpha
        mass = beta.sum(axis=0)[target_idx]
        measure = ProbMeasure.from_weights(mass)

        ambient_limit = transport_service.pushforward(limit.embedding, mu_limit, ambient.n)
        ambient_target = transport_service.pushforward(target.embedding, measure, ambient.n)
        distance = transport_service.wasserstein(ambient, q, ambient_limit, ambient_target).distance
        result = TransferResult(measure=measure,
                                sup_density=measure.sup_density(target.space),
                                input_sup_density=mu_limit.sup_density(limit.space),
                                z_limit=z_limit, z_target=z_target, distance=distance)
        self.logger.debug(f"pmGH 转移: z_∞={z_limit:.6g}，z_n={z_target:.6g}，W_q={distance:.6g}")
        return result

    def limsup_profile(self, values: Sequence[float], tail: Optional[int] = None
                       ) -> Tuple[float, float]:
        """有限序列的 limsup 估计

        尾部上确界 s_k = sup_{j ≥ k} C^j；估计值取最后一个 s_k，
        不确定度取尾部内 s_k 的跨度。tail 默认取整个序列。

        Returns:
            Tuple[float, float]: (估计值, 不确定度)
        """
        values = list(values)
        if not values:
            raise InputError("轮廓序列不能为空")
        tail = len(values) if tail is None else max(1, min(tail, len(values)))
        sups = np.maximum.accumulate(np.asarray(values[::-1]))[::-1][-tail:]
        return float(sups[-1]), float(sups[0] - sups[-1])

    def pmgh_stability_check(self, sequence: Sequence[EmbeddedSpace],
                             profiles: Sequence[ProfileFunction], limit: EmbeddedSpace,
                             ambient: FiniteMetricMeasureSpace, q: float,
                             pairs: Sequence[Tuple[ProbMeasure, ProbMeasure]],
                             limit_profile: Optional[ProfileFunction] = None,
                             cutoff_eta: Optional[Sequence[float]] = None,
                             levels: Optional[int] = None,
                             tail: Optional[int] = None) -> CheckReport:
        """BIP 的 pmGH 稳定性检查

        把极限空间上的每个测试对转移到每个逼近空间并以该空间的轮廓运行
        bip_verify；再检查 limsup_n C^n(D) ≤ C(D) 的假设（尾部估计值本身
        不超过 C(D)，不确定度只写入 details），并以极限轮廓验证极限空间本身。limit_profile 缺省时
        取 limsup 估计构成的采样轮廓。
        """
        if len(sequence) != len(profiles):
            raise InputError(f"空间序列 ({len(sequence)}) 与轮廓序列 ({len(profiles)}) 长度不一致")
        if not sequence:
            raise InputError("空间序列不能为空")
        checks: List[CheckResult] = []
        flags: List[str] = []
        distances = []
        for n, (embedded, profile) in enumerate(zip(sequence, profiles)):
            transferred, row = [], []
            for mu0, mu1 in pairs:
                t0 = self.pmgh_transfer(embedded, limit, ambient, mu0, cutoff_eta, q)
                t1 = self.pmgh_transfer(embedded, limit, ambient, mu1, cutoff_eta, q)
                transferred.append((t0.measure, t1.measure))
                row.append(max(t0.distance, t1.distance))
                for tag, result in (("mu0", t0), ("mu1", t1)):
                    checks.append(CheckResult.inequality(
                        f"pmgh/space_{n:03d}/transfer/{len(row) - 1:04d}/{tag}",
                        "||rho_n|| <= (z_inf / z_n) ||rho_inf||",
                        result.sup_density, result.bound_factor * result.input_sup_density,
                        slack=settings.CHECK_SLACK))
            distances.append(row)
            report = interpolation_service.bip_verify(embedded.space, q, transferred,
                                                      profile, levels)
            for check in report.checks:
                checks.append(check.model_copy(
                    update={"check_id": f"pmgh/space_{n:03d}/{check.check_id}"}))
            flags.extend(f"space {n}: {flag}" for flag in report.flags)

        diameters = [union_diameter(limit.space, mu0, mu1) for mu0, mu1 in pairs]
        samples = []
        for index, D in enumerate(diameters):
            values = [curvature_service.profile_value(p, D) for p in profiles]
            estimate, spread = self.limsup_profile(values, tail)
            samples.append((D, estimate))
            if limit_profile is not None:
                checks.append(CheckResult.inequality(
                    f"pmgh/limsup/{index:04d}", "limsup_n C^n(D) <= C(D)",
                    estimate, curvature_service.profile_value(limit_profile, D),
                    slack=settings.CHECK_SLACK, details={"D": D, "spread": spread}))
        if limit_profile is None:
            limit_profile = (ProfileFunction(kind="sampled", samples=tuple(samples))
                             if samples else ProfileFunction.constant(1.0))
        limit_report = interpolation_service.bip_verify(limit.space, q, pairs, limit_profile, levels)
        for check in limit_report.checks:
            checks.append(check.model_copy(update={"check_id": f"pmgh/limit/{check.check_id}"}))
        flags.extend(f"limit: {flag}" for flag in limit_report.flags)
        return CheckReport(
            name="pmgh_stability_check", checks=tuple(checks), flags=tuple(flags),
            data={"transfer_distances": distances, "limit_profile": limit_profile.to_dict(),
                  "limit_worst_ratio": limit_report.data["worst_ratio"]})


# 创建单例实例
pmgh_service = PmghService()
