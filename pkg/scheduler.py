import asyncio
import logging
import time
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import partial
from typing import Any, Awaitable, Callable, Dict, List, Optional

logger = logging.getLogger("Dust.Scheduler")


class TaskStatus(Enum):
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class SweepTask:
    id: str
    function: Callable
    args: tuple = ()
    kwargs: Dict[str, Any] = field(default_factory=dict)
    status: TaskStatus = TaskStatus.PENDING
    result: Any = None
    error: Optional[str] = None
    execution_time: float = 0.0


class SweepScheduler:
    """
    Runs independent benchmark tasks with at most `jobs` in flight.
    CPU work goes to a process pool when jobs > 1; results are handed to the
    callback one at a time, and a failed task never stops the sweep.
    """

    def __init__(self, jobs: int = 1):
        self.jobs = max(1, int(jobs))
        self.completed_tasks: List[SweepTask] = []
        self.failed_tasks: List[SweepTask] = []
        self._lock: Optional[asyncio.Lock] = None

        # Performance metrics
        self.metrics = {
            "total_tasks_scheduled": 0,
            "total_tasks_completed": 0,
            "total_tasks_failed": 0,
            "average_execution_time": 0.0,
        }

    def _executor(self) -> Executor:
        if self.jobs > 1:
            return ProcessPoolExecutor(max_workers=self.jobs)
        return ThreadPoolExecutor(max_workers=1)

    async def run(self, tasks: List[SweepTask],
                  on_result: Optional[Callable[[SweepTask], Awaitable[None]]] = None) -> List[SweepTask]:
        self._lock = asyncio.Lock()
        semaphore = asyncio.Semaphore(self.jobs)
        self.metrics["total_tasks_scheduled"] += len(tasks)
        logger.info(f"⏰ Sweep started: {len(tasks)} tasks, {self.jobs} job(s)")

        with self._executor() as executor:
            await asyncio.gather(*(self._execute_task(task, executor, semaphore, on_result) for task in tasks))

        logger.info(f"✅ Sweep finished: {self.metrics['total_tasks_completed']} completed, "
                    f"{self.metrics['total_tasks_failed']} failed")
        return tasks

    def run_sync(self, tasks: List[SweepTask],
                 on_result: Optional[Callable[[SweepTask], Awaitable[None]]] = None) -> List[SweepTask]:
        return asyncio.run(self.run(tasks, on_result))

    async def _execute_task(self, task: SweepTask, executor: Executor, semaphore: asyncio.Semaphore,
                            on_result: Optional[Callable[[SweepTask], Awaitable[None]]]):
        loop = asyncio.get_running_loop()
        async with semaphore:
            task.status = TaskStatus.RUNNING
            start_time = time.perf_counter()
            try:
                task.result = await loop.run_in_executor(executor, partial(task.function, *task.args, **task.kwargs))
                task.status = TaskStatus.COMPLETED
            except Exception as e:
                task.status = TaskStatus.FAILED
                task.error = f"{type(e).__name__}: {e}"
                logger.error(f"Task execution failed: {task.id} - {task.error}")
            task.execution_time = time.perf_counter() - start_time

        async with self._lock:
            if task.status == TaskStatus.COMPLETED:
                self.metrics["total_tasks_completed"] += 1
                self._update_average_execution_time(task.execution_time)
                self.completed_tasks.append(task)
            else:
                self.metrics["total_tasks_failed"] += 1
                self.failed_tasks.append(task)
            if on_result is not None:
                await on_result(task)

    def _update_average_execution_time(self, execution_time: float):
        current_avg = self.metrics["average_execution_time"]
        completed_count = self.metrics["total_tasks_completed"]
        self.metrics["average_execution_time"] = ((current_avg * (completed_count - 1)) + execution_time) / completed_count

    def get_status(self) -> Dict[str, Any]:
        return {
            "jobs": self.jobs,
            "task_statistics": {
                "completed": len(self.completed_tasks),
                "failed": len(self.failed_tasks),
            },
            "performance_metrics": dict(self.metrics),
            "recent_failed_tasks": [{"id": t.id, "error": t.error} for t in self.failed_tasks[-5:]],
        }
