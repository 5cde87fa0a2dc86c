"""bip-lab 异常层次

所有库内异常都继承自 BipLabError。输入类错误同时继承 ValueError，
命令行据此把它们映射为退出码 2。
"""


class BipLabError(Exception):
    """bip-lab 异常基类"""


class InputError(BipLabError, ValueError):
    """输入文件或参数格式错误"""


class SpaceValidationError(InputError):
    """空间、测度、曲线或测试计划不满足不变量"""


class TransportError(BipLabError):
    """运输问题内部错误（含暴力枚举实例过大）"""


class SolverConvergenceError(BipLabError):
    """迭代预算耗尽仍未收敛

    Attributes:
        residuals: 终止时的约束残差（若有）
    """

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class CurveError(BipLabError, ValueError):
    """曲线/测试计划操作错误：时间未对齐网格、点对不连通、拼接边缘不匹配"""


class InterpolationError(BipLabError):
    """中点线性规划不可行或密度上界不可达

    Attributes:
        level: 失败的二进层级（若适用）
        excess: 该层最小超额质量（若适用）
    """

    def __init__(self, message: str, level=None, excess=None):
        super().__init__(message)
        self.level = level
        self.excess = excess


class CurvatureDomainError(BipLabError, ValueError):
    """畸变系数或轮廓函数的参数越界"""


class ReportError(BipLabError):
    """报告无法写出"""
