from pydantic_settings import BaseSettings, SettingsConfigDict
import os


class Settings(BaseSettings):
    """应用程序配置类

    用于管理 bip-lab 的所有配置项，包括运行控制、数值容差、求解器预算、
    日志配置以及异常处理配置等。
    继承自 pydantic_settings.BaseSettings，支持从环境变量和 .env 文件加载配置。
    """

    model_config = SettingsConfigDict(
        case_sensitive=True,
        env_file=".env",
        extra="ignore",
    )

    # 应用配置
    APP_NAME: str = "bip-lab"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False

    # 运行控制
    BIPLAB_THREADS: int = 1
    BIPLAB_SEED: int = 0

    # 数值容差
    STRUCTURE_TOL: float = 1e-12      # 结构性不变量（对称、三角不等式、总质量）
    CHECK_SLACK: float = 1e-9         # 不等式检查的相对松弛
    MARGINAL_TOL: float = 1e-10       # 耦合边缘分布
    FEASIBILITY_TOL: float = 1e-8     # 中间测度成员、超额质量
    DENSITY_SLACK: float = 1e-6       # 插值密度界的相对松弛

    # 求解器配置
    SIMPLEX_MAX_ITER: int = 100000
    BRUTE_FORCE_MAX_SUPPORT: int = 6
    BRUTE_FORCE_MAX_BASES: int = 200000
    LP_METHOD: str = "highs"
    LP_TOL: float = 1e-10
    DYADIC_LEVELS: int = 4
    GRADIENT_MAX_ITER: int = 20000
    GRADIENT_RESTARTS: int = 5
    GRADIENT_RESIDUAL_TOL: float = 1e-7

    # 日志配置
    LOG_DIR: str = os.path.join(os.path.expanduser("~"), ".bip_lab", "logs")
    LOG_LEVEL: str = "WARNING"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    LOG_DATE_FORMAT: str = "%Y-%m-%d %H:%M:%S"
    LOG_TO_FILE: bool = False
    LOG_FILE_MAX_SIZE: str = "10MB"
    LOG_FILE_BACKUP_COUNT: int = 5

    # 异常处理配置
    SHOW_DETAILED_ERRORS: bool = True


settings = Settings()  # 创建全局配置实例
