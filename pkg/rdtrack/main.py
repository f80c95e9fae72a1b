# rdtrack/main.py
import logging
import sys
from typing import List, Optional

from modules.cli import parse_args, resolve_out
from rdtrack.exceptions import MissingDependencyError, NumericError, WorkbenchError
from utils.logger import configure_logging, log_fail, log_info


def _print_project_info() -> None:
    print("rdtrack workbench")
    print("Моделирование LFMCW-кадров, обнаружение (CA-CFAR, Монте-Карло, нейросеть) и сопровождение с C-AKF")
    print("Проект распространяется под лицензией Apache-2.0")


def dispatch(args) -> int:
    """Выполняет подкоманду; исключения обрабатывает вызывающий код."""
    command = args.command
    if command == "health":
        from rdtrack.health import health_check_handler, print_health_status

        return health_check_handler() if args.json else print_health_status()

    from modules import experiment_runner as runner

    out = resolve_out(args)
    if command == "simulate":
        kwargs = {"snr_db": args.snr_db} if hasattr(args, "snr_db") else {}
        runner.cmd_simulate(args.config, out, seed=args.seed, **kwargs)
    elif command == "detect":
        runner.cmd_detect(args.input, out, detector=args.detector, pfa=args.pfa, weights=args.weights,
                          conf_threshold=args.conf_threshold, cluster=args.cluster)
    elif command == "train":
        runner.cmd_train(args.config, out, seed=args.seed, samples=args.samples, epochs=args.epochs,
                         batch_size=args.batch_size, learning_rate=args.lr, conf_threshold=args.conf_threshold)
    elif command == "track":
        runner.cmd_track(args.config, out, detections=args.detections, seed=args.seed, fixed_r=args.fixed_r,
                         position_only=args.position_only, mu=args.mu)
    elif command == "eval":
        runner.cmd_eval(out, input_dir=args.input, config=args.config, detections=args.detections,
                        tracks=args.tracks, seed=args.seed)
    elif command == "e2e":
        runner.cmd_e2e(args.manifest, out=args.out, workers=args.workers)
    return 0


def run(argv: Optional[List[str]] = None) -> int:
    """Код возврата: 0 успех, 1 конфигурация, 2 данные, 3 численная ошибка."""
    args = parse_args(argv)
    if getattr(args, "info", False):
        _print_project_info()
        return 0

    configure_logging(
        log_file=getattr(args, "log_file", None),
        verbose=getattr(args, "verbose", False),
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
    )
    if args.command != "health":
        log_info(f"rdtrack {args.command}")
    try:
        return dispatch(args)
    except MissingDependencyError as exc:
        log_fail(f"Отсутствует зависимость: {exc}")
        return exc.exit_code
    except WorkbenchError as exc:
        log_fail(f"{type(exc).__name__}: {exc}")
        return exc.exit_code
    except OSError as exc:
        log_fail(f"Ошибка ввода-вывода: {exc}")
        return 2
    except (ArithmeticError, ValueError) as exc:
        # numpy.linalg.LinAlgError наследует ValueError, FloatingPointError наследует ArithmeticError
        log_fail(f"Численная ошибка: {type(exc).__name__}: {exc}")
        return NumericError.exit_code


def main() -> None:
    sys.exit(run())
