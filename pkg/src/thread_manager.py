"""
Thread manager for per-sample fan-out.

Runs one function over many sample points of a validity box in a thread
pool, with a progress bar, error collection and results returned in
sample order so that reductions over them are deterministic.
"""

import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from tqdm import tqdm

from src.logger import get_logger


@dataclass
class SampleTask:
    """
    One sample point of a suite run.
    """
    index: int
    point: Tuple[float, ...]
    task_id: Optional[str] = None  # Identifier used in logs

    def __post_init__(self):
        """Generate task_id if not provided."""
        if self.task_id is None:
            self.task_id = f"sample-{self.index}"


@dataclass
class SampleResult:
    """
    Result of a sample task.
    """
    task: SampleTask
    success: bool
    value: Any = None
    error: Optional[Exception] = None


class SampleRunner:
    """
    Evaluates a function at many sample points using a thread pool.

    Features:
    - Thread pool over sample points
    - Progress bar across the whole sample set
    - Error collection per sample
    - Results sorted by sample index
    """

    def __init__(self, max_workers: int = 4, show_progress: bool = True):
        """
        Initialize the runner.

        Args:
            max_workers: Maximum number of concurrent worker threads
            show_progress: Draw a tqdm progress bar
        """
        if max_workers < 1:
            raise ValueError(f"max_workers must be at least 1, got {max_workers}")
        self.max_workers = max_workers
        self.show_progress = show_progress
        self.logger = get_logger()

        # Thread-safe tracking
        self.lock = threading.Lock()
        self.active_tasks = {}

    def run_task(self, task: SampleTask, fn: Callable[[SampleTask], Any]) -> SampleResult:
        """
        Evaluate ``fn`` on a single task.

        Returns:
            SampleResult with the value, or the error that ``fn`` raised
        """
        self.logger.debug(f"Starting {task.task_id} at {task.point}")

        try:
            with self.lock:
                self.active_tasks[task.task_id] = task

            value = fn(task)
            return SampleResult(task=task, success=True, value=value)

        except Exception as e:
            self.logger.error(f"Sample failed: {task.task_id} at {task.point} - {e}")
            return SampleResult(task=task, success=False, error=e)

        finally:
            with self.lock:
                self.active_tasks.pop(task.task_id, None)

    def run(self, tasks: Sequence[SampleTask], fn: Callable[[SampleTask], Any],
            desc: str = 'Samples',
            progress_callback: Optional[Callable] = None) -> List[SampleResult]:
        """
        Evaluate ``fn`` on every task concurrently.

        Args:
            tasks: Sample tasks
            fn: task -> value, called from worker threads
            desc: Progress bar label
            progress_callback: Optional callback(completed, total, result)

        Returns:
            List of SampleResult objects sorted by sample index

        Example:
            >>> runner = SampleRunner(max_workers=2, show_progress=False)
            >>> tasks = [SampleTask(i, (float(i), 0.0, 0.0, 0.0)) for i in range(4)]
            >>> results = runner.run(tasks, lambda t: t.point[0] ** 2)
            >>> [r.value for r in results]
            [0.0, 1.0, 4.0, 9.0]
        """
        if not tasks:
            self.logger.warning("No samples to evaluate")
            return []

        self.logger.debug(f"Evaluating {len(tasks)} samples with {self.max_workers} workers")

        results = []
        progress_bar = tqdm(total=len(tasks), unit='sample', desc=desc,
                            disable=not self.show_progress, leave=False)

        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            future_to_task = {
                executor.submit(self.run_task, task, fn): task
                for task in tasks
            }

            for future in as_completed(future_to_task):
                task = future_to_task[future]

                try:
                    result = future.result()
                except Exception as e:
                    self.logger.error(f"Task execution failed: {task.task_id} - {e}")
                    result = SampleResult(task=task, success=False, error=e)

                results.append(result)
                progress_bar.update(1)
                if progress_callback:
                    progress_callback(len(results), len(tasks), result)

        progress_bar.close()

        stuck = self.get_active_tasks()
        if stuck:
            self.logger.warning(f"{desc}: tasks still registered after the pool finished: {sorted(stuck)}")

        results.sort(key=lambda r: r.task.index)
        successful = sum(1 for r in results if r.success)
        self.logger.debug(f"{desc}: {successful} successful, {len(results) - successful} failed")
        return results

    def get_active_tasks(self) -> Dict[str, SampleTask]:
        """
        Get currently running sample tasks.

        Returns:
            dict: Mapping of task_id to SampleTask
        """
        with self.lock:
            return self.active_tasks.copy()


def create_sample_tasks(points: Sequence[Sequence[float]], prefix: str = 'sample') -> List[SampleTask]:
    """Index a list of points as SampleTasks."""
    return [SampleTask(index=i, point=tuple(float(x) for x in p), task_id=f"{prefix}-{i}")
            for i, p in enumerate(points)]


def evaluate_samples(points: Sequence[Sequence[float]], fn: Callable[[SampleTask], Any],
                     max_workers: int = 4, show_progress: bool = False,
                     desc: str = 'Samples', prefix: str = 'sample') -> List[SampleResult]:
    """
    Evaluate ``fn`` at every point and return results in point order.

    Task ids are ``{prefix}-{index}``.

    Example:
        >>> results = evaluate_samples(inst.corners(), lambda t: curvature_bundle(inst, t.point))
        >>> failed = [r for r in results if not r.success]
    """
    runner = SampleRunner(max_workers=max_workers, show_progress=show_progress)
    return runner.run(create_sample_tasks(points, prefix=prefix), fn, desc=desc)
