# modules/cli.py
import argparse
import sys
from pathlib import Path
from typing import List, Optional

from utils.paths import OUT_ENV, default_output_root

# ──────────────────────────────────────────────────────────────────────────────
# Разбор значений
# ──────────────────────────────────────────────────────────────────────────────
def parse_snr(raw: str) -> Optional[float]:
    """SNR в дБ или 'none' для прогона без шума."""
    if raw.strip().lower() == "none":
        return None
    try:
        return float(raw)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"неверное значение SNR: '{raw}' (число или none)") from exc


def parse_probability(raw: str) -> float:
    try:
        value = float(raw)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"ожидалось число, получено '{raw}'") from exc
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"значение должно лежать в (0, 1), получено {value}")
    return value


def parse_positive_int(raw: str) -> int:
    try:
        value = int(raw)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"ожидалось целое число, получено '{raw}'") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"значение должно быть >= 1, получено {value}")
    return value


def resolve_out(args: argparse.Namespace) -> Path:
    """--out или <RDTRACK_OUT>/<команда>."""
    out = getattr(args, "out", None)
    if out:
        return Path(out)
    return default_output_root() / args.command


# ──────────────────────────────────────────────────────────────────────────────
# Парсинг аргументов
# ──────────────────────────────────────────────────────────────────────────────
def _add_out(sub: argparse.ArgumentParser) -> None:
    sub.add_argument(
        "--out",
        metavar="DIR",
        help=f"Каталог результатов (по умолчанию: ${OUT_ENV}/<команда>, ${OUT_ENV}=results)",
    )


def _add_seed(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, help="Переопределить seed сценария")


def _add_config(sub: argparse.ArgumentParser, required: bool = True) -> None:
    sub.add_argument("--config", required=required, metavar="SCENARIO", help="Файл сценария ([radar]/[run]/...)")


class _Parser(argparse.ArgumentParser):
    """Ошибки командной строки - это ошибки конфигурации: код возврата 1."""

    def error(self, message: str):  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="rdtrack",
        description="rdtrack: моделирование RD-кадров, обнаружение целей и сопровождение.",
    )
    parser.add_argument("-i", "--info", action="store_true", help="Показать сведения о проекте и завершиться.")
    parser.add_argument("-v", "--verbose", action="store_true", help="Подробный вывод (DEBUG).")
    parser.add_argument("--log-file", metavar="FILE", help="Дублировать вывод в файл журнала.")

    subs = parser.add_subparsers(dest="command", required=False, help="Доступные команды")

    sub_sim = subs.add_parser("simulate", help="Смоделировать RD-кадры и истину")
    _add_config(sub_sim)
    _add_out(sub_sim)
    _add_seed(sub_sim)
    sub_sim.add_argument(
        "--snr-db",
        type=parse_snr,
        default=argparse.SUPPRESS,
        help="SNR до обработки в дБ или none (по умолчанию: из сценария)",
    )

    sub_det = subs.add_parser("detect", help="Обнаружение целей в смоделированных кадрах")
    sub_det.add_argument("input", metavar="SIM_DIR", help="Каталог результата simulate")
    _add_out(sub_det)
    sub_det.add_argument("--detector", choices=["cfar", "montecarlo", "neural"], default="cfar",
                         help="Обнаружитель (по умолчанию: cfar)")
    sub_det.add_argument("--pfa", type=parse_probability, default=1e-5,
                         help="Вероятность ложной тревоги для montecarlo (по умолчанию: 1e-5)")
    sub_det.add_argument("--weights", metavar="FILE", help="Веса нейросетевого обнаружителя (INDTW1)")
    sub_det.add_argument("--conf-threshold", type=parse_probability, default=0.5,
                         help="Порог уверенности нейросети (по умолчанию: 0.5)")
    sub_det.add_argument("--cluster", action="store_true", help="Объединить обнаружения через DBSCAN")

    sub_train = subs.add_parser("train", help="Обучить нейросетевой обнаружитель")
    _add_config(sub_train)
    _add_out(sub_train)
    _add_seed(sub_train)
    sub_train.add_argument("--samples", type=parse_positive_int, default=64, help="Размер набора (по умолчанию: 64)")
    sub_train.add_argument("--epochs", type=parse_positive_int, default=10, help="Число эпох (по умолчанию: 10)")
    sub_train.add_argument("--batch-size", type=parse_positive_int, default=16, help="Размер батча (по умолчанию: 16)")
    sub_train.add_argument("--lr", type=float, default=0.01, help="Шаг Adam (по умолчанию: 0.01)")
    sub_train.add_argument("--conf-threshold", type=parse_probability, default=0.5,
                           help="Порог уверенности для оценки Pd на тестовой части")

    sub_track = subs.add_parser("track", help="Сопровождение целей")
    _add_config(sub_track)
    _add_out(sub_track)
    _add_seed(sub_track)
    sub_track.add_argument("--detections", metavar="CSV", help="CSV обнаружений (иначе кадры измерений сценария)")
    sub_track.add_argument("--fixed-r", action="store_true", help="Не масштабировать R по уверенности")
    sub_track.add_argument("--position-only", action="store_true", help="Стоимость только по расстоянию Махаланобиса")
    sub_track.add_argument("--mu", type=float, default=0.3, help="Вес расстояния признаков (по умолчанию: 0.3)")

    sub_eval = subs.add_parser("eval", help="Метрики Pd/Pfa и OSPA")
    sub_eval.add_argument("--input", metavar="SIM_DIR", help="Каталог результата simulate (истина)")
    _add_config(sub_eval, required=False)
    _add_out(sub_eval)
    _add_seed(sub_eval)
    sub_eval.add_argument("--detections", metavar="CSV", help="CSV обнаружений")
    sub_eval.add_argument("--tracks", metavar="CSV", help="CSV треков")

    sub_e2e = subs.add_parser("e2e", help="Полный эксперимент по YAML-манифесту")
    sub_e2e.add_argument("manifest", metavar="MANIFEST", help="YAML-манифест прогона")
    _add_out(sub_e2e)
    sub_e2e.add_argument("--workers", type=int, default=0,
                         help="Количество потоков (0: RDTRACK_WORKERS или авто)")

    sub_health = subs.add_parser("health", help="Проверка окружения")
    sub_health.add_argument("--json", action="store_true", help="Вывод в JSON формате (для автоматизации)")
    return parser


def parse_args(argv: List[str] | None = None) -> argparse.Namespace:
    if argv is None:
        argv = sys.argv[1:]

    parser = build_parser()
    args = parser.parse_args(argv)

    if getattr(args, "info", False):
        if getattr(args, "command", None):
            parser.error("--info нельзя использовать вместе с командами")
        return args

    if getattr(args, "command", None) is None:
        parser.print_help()
        sys.exit(1)
    if args.command == "eval" and not (args.detections or args.tracks):
        parser.error("eval: укажите --detections и/или --tracks")
    if args.command == "eval" and not (args.input or args.config):
        parser.error("eval: укажите --input или --config")
    if args.command == "detect" and args.detector == "neural" and not args.weights:
        parser.error("detect: для --detector neural нужен --weights")
    return args
