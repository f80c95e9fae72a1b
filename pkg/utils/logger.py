# utils/logger.py
"""Цветной консольный лог rdtrack с префиксом прогона и зеркалированием в файл.

Команда ``e2e`` гоняет seed'ы в потоках, поэтому строки одного потока
помечаются контекстом (``[seed 3]``), а запись в файл идёт под блокировкой.
"""

import logging
import sys
import threading
from contextlib import contextmanager
from datetime import datetime
from pathlib import Path
from typing import Iterator, Optional, TextIO

from colorama import Fore, Style, init

init(autoreset=True)

_log_file: Optional[Path] = None
_log_level: int = logging.INFO
_verbose: bool = False
_file_lock = threading.Lock()
_context = threading.local()

# тег -> (цвет, поток вывода, минимальный уровень)
_TAGS = {
    "DEBUG": (Fore.BLUE, "out", logging.DEBUG),
    "INFO": (Fore.CYAN, "out", logging.INFO),
    "PASS": (Fore.GREEN, "out", logging.INFO),
    "WARN": (Fore.YELLOW, "out", logging.WARNING),
    "FAIL": (Fore.RED, "err", logging.ERROR),
}


def configure_logging(log_file: Optional[str] = None, verbose: bool = False, level: int = logging.INFO):
    """
    Настройка параметров логирования.

    Args:
        log_file: Путь к файлу, куда дублируются все строки (с временем)
        verbose: Показывать отладочные сообщения
        level: Порог вывода в консоль (logging.DEBUG, INFO, WARNING, ERROR)
    """
    global _log_file, _log_level, _verbose
    _log_file = Path(log_file) if log_file else None
    _log_level = level
    _verbose = verbose

    if _log_file:
        _log_file.parent.mkdir(parents=True, exist_ok=True)


def is_verbose() -> bool:
    return _verbose or _log_level <= logging.DEBUG


def current_context() -> str:
    return getattr(_context, "prefix", "")


@contextmanager
def log_context(**fields) -> Iterator[None]:
    """Помечает строки текущего потока, например ``log_context(seed=3)`` даёт ``[seed 3]``."""
    previous = current_context()
    label = " ".join(f"{key} {value}" for key, value in fields.items())
    _context.prefix = f"{previous}[{label}] " if label else previous
    try:
        yield
    finally:
        _context.prefix = previous


def _write_to_file(tag: str, msg: str):
    if _log_file is None:
        return
    timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
    try:
        with _file_lock, open(_log_file, "a", encoding="utf-8") as f:
            f.write(f"[{timestamp}] [{tag}] {msg}\n")
    except OSError:
        pass


def _emit(tag: str, msg: str):
    colour, stream_name, min_level = _TAGS[tag]
    line = current_context() + msg
    _write_to_file(tag, line)
    if tag == "DEBUG" and not is_verbose():
        return
    if tag != "DEBUG" and _log_level > min_level:
        return
    stream: TextIO = sys.stderr if stream_name == "err" else sys.stdout
    print(colour + f"[{tag}] " + Style.RESET_ALL + line, file=stream)


def log_debug(msg: str):
    """Отладочное сообщение (только при verbose)."""
    _emit("DEBUG", msg)


def log_info(msg: str):
    _emit("INFO", msg)


def log_pass(msg: str):
    """Команда или этап завершены, артефакты записаны."""
    _emit("PASS", msg)


def log_warn(msg: str):
    """Данные приняты с оговоркой (отброшенное измерение, совпавшие цели в ячейке)."""
    _emit("WARN", msg)


def log_fail(msg: str):
    """Провал команды; всегда в stderr."""
    _emit("FAIL", msg)


def log_section(title: str):
    """Заголовок крупного этапа (например, обучения внутри e2e)."""
    separator = "=" * 60
    print(Fore.CYAN + Style.BRIGHT + f"\n{separator}\n  {current_context()}{title}\n{separator}" + Style.RESET_ALL)
    _write_to_file("SECTION", current_context() + title)
