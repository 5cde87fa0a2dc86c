from pathlib import Path
from typing import Any, ClassVar, Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ExperimentConfig(BaseModel):
    """一次命令行实验的配置"""

    model_config = ConfigDict(frozen=True)

    COMMANDS: ClassVar[Tuple[str, ...]] = (
        "validate", "wasserstein", "interpolate", "bip-verify",
        "curvature-check", "sobolev", "pmgh", "report",
    )
    # 各命令必需的输入文件
    REQUIRED_PATHS: ClassVar[Dict[str, Tuple[str, ...]]] = {
        "validate": ("space",),
        "wasserstein": ("space", "mu0", "mu1"),
        "interpolate": ("space", "mu0", "mu1"),
        "bip-verify": ("space", "pairs"),
        "curvature-check": ("space", "pairs"),
        "sobolev": ("space", "f"),
        "pmgh": ("config",),
        "report": ("config",),
    }

    command: str
    paths: Dict[str, str] = Field(default_factory=dict)
    params: Dict[str, Any] = Field(default_factory=dict)
    output: Optional[str] = None
    format: str = "json"

    @field_validator("command")
    @classmethod
    def _check_command(cls, value: str) -> str:
        if value not in cls.COMMANDS:
            raise ValueError(f"未知命令: {value}")
        return value

    @field_validator("format")
    @classmethod
    def _check_format(cls, value: str) -> str:
        if value not in ("json", "csv"):
            raise ValueError(f"输出格式必须是 json 或 csv，实际为 {value}")
        return value

    @model_validator(mode="after")
    def _check_paths(self) -> "ExperimentConfig":
        for key in self.REQUIRED_PATHS[self.command]:
            path = self.paths.get(key)
            if not path:
                raise ValueError(f"命令 {self.command} 缺少输入文件参数 --{key}")
            if not Path(path).is_file():
                raise ValueError(f"输入文件不存在: {path}")
        return self

    def param(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)
