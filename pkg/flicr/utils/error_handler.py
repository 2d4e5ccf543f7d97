import logging
import os
import platform
import shutil
import traceback
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)


class FlicrError(Exception):
    """Base class for every error raised by the codec"""


class ParameterError(FlicrError, ValueError):
    """Invalid configuration value (bpp, field of view, codec params, ...)"""

    def __init__(self, message: str, parameter: Optional[str] = None):
        super().__init__(message)
        self.parameter = parameter


class MalformedInputError(FlicrError):
    """Scan file that cannot be parsed"""

    def __init__(self, message: str, offset: Optional[int] = None):
        super().__init__(message)
        self.offset = offset


class DomainError(FlicrError, ValueError):
    """Metric called outside its domain (empty cloud, beta <= 0, ...)"""


class MalformedStreamError(FlicrError):
    """Codec token stream is corrupt or truncated"""

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class StreamDecodeError(FlicrError):
    """Container header or payload cannot be decoded"""


class ErrorHandler:
    """Error logging and reporting helpers shared by the commands and the sweep"""

    EXIT_OK = 0
    EXIT_FAILURE = 1
    EXIT_USAGE = 2

    @staticmethod
    def log_error(error: Exception, context: str = "", extra_data: Optional[Dict[str, Any]] = None):
        """Log error with context and extra data"""
        error_msg = f"Error in {context}: {str(error)}"
        if extra_data:
            error_msg += f" | Extra data: {extra_data}"

        logger.error(error_msg)
        logger.debug("Traceback: %s", "".join(traceback.format_exception(type(error), error, error.__traceback__)))

    @staticmethod
    def cleanup_temp_files(*temp_dirs):
        """Clean up temporary directories safely"""
        for temp_dir in temp_dirs:
            if temp_dir and os.path.exists(temp_dir):
                try:
                    shutil.rmtree(temp_dir)
                    logger.info(f"Cleaned up temp directory: {temp_dir}")
                except Exception as e:
                    logger.error(f"Failed to clean up temp directory {temp_dir}: {e}")

    @staticmethod
    def exit_code_for(error: Exception) -> int:
        if isinstance(error, ParameterError):
            return ErrorHandler.EXIT_USAGE
        return ErrorHandler.EXIT_FAILURE

    @staticmethod
    def handle_command_error(error: Exception, context: str = "command") -> Dict[str, Any]:
        """Turn an exception raised by a subcommand into a printable error dict"""
        if isinstance(error, ParameterError):
            label = "Parameter error"
        elif isinstance(error, (MalformedInputError, MalformedStreamError, StreamDecodeError)):
            label = "Malformed input"
        elif isinstance(error, DomainError):
            label = "Metric domain error"
        elif isinstance(error, OSError):
            label = "I/O error"
        elif isinstance(error, FlicrError):
            label = "Codec error"
        else:
            label = "Unexpected error"

        if isinstance(error, FlicrError) or isinstance(error, OSError):
            logger.error(f"{context} failed: {error}")
        else:
            ErrorHandler.log_error(error, context)
            logger.error("Traceback: %s", "".join(traceback.format_exception(type(error), error, error.__traceback__)))

        return {
            "error": label,
            "details": str(error),
            "exit_code": ErrorHandler.exit_code_for(error),
        }

    @staticmethod
    def get_system_info() -> Dict[str, Any]:
        """Get system information attached to benchmark metadata"""
        import psutil

        try:
            memory = psutil.virtual_memory()
            return {
                "platform": platform.system(),
                "machine": platform.machine(),
                "processor": platform.processor(),
                "python_version": platform.python_version(),
                "cpu_count": psutil.cpu_count(),
                "cpu_count_physical": psutil.cpu_count(logical=False),
                "memory_total": memory.total,
                "memory_available": memory.available,
            }
        except Exception as e:
            logger.error(f"Error getting system info: {e}")
            return {"error": str(e)}
