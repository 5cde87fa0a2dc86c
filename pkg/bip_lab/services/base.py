from typing import Optional

from ..config import settings
from ..exceptions import BipLabError
from ..utils.logger import service_logger


class BaseService:
    """服务基类

    提供统一的日志记录器与错误处理，所有具体服务类都继承这个类。
    """

    def __init__(self, logger=None):
        """初始化服务

        Args:
            logger: 日志记录器，默认使用服务层日志记录器
        """
        self.logger = logger or service_logger

    def _handle_error(self, error: Exception, context: str = "",
                      wrap: Optional[type] = None) -> None:
        """统一的错误处理方法

        记录错误后重新抛出。SHOW_DETAILED_ERRORS 关闭时，非库内异常
        被包装成 wrap 指定的类型（默认 BipLabError）。

        Args:
            error: 异常对象
            context: 错误发生的上下文描述
            wrap: 包装异常类型
        """
        error_msg = f"{context} - Error: {error}"
        self.logger.error(error_msg)
        if settings.SHOW_DETAILED_ERRORS or isinstance(error, BipLabError):
            raise error
        raise (wrap or BipLabError)(error_msg) from error
