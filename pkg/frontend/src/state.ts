// Local state for one labeling round: staged classes and keyboard focus.
// Labels only enter this store through stage(), i.e. an explicit user action.

import type { LabelItem, LabelTask } from "./api.js";

export class LabelingRound {
  readonly tasks: LabelTask[];
  private staged = new Map<string, number>();
  private focus = 0;

  constructor(tasks: LabelTask[]) {
    this.tasks = [...tasks].sort((a, b) => a.example_id - b.example_id);
  }

  get size(): number {
    return this.tasks.length;
  }

  get round(): number | null {
    return this.tasks.length ? this.tasks[0]!.round : null;
  }

  get classNames(): string[] {
    return this.tasks.length ? this.tasks[0]!.class_names : [];
  }

  get focusIndex(): number {
    return this.focus;
  }

  setFocus(index: number): void {
    if (index >= 0 && index < this.tasks.length) this.focus = index;
  }

  focusedTask(): LabelTask | null {
    return this.tasks[this.focus] ?? null;
  }

  stagedClass(taskId: string): number | undefined {
    return this.staged.get(taskId);
  }

  /** Label the focused task and advance focus to the next unlabeled one. */
  stage(cls: number): boolean {
    const task = this.focusedTask();
    if (!task || !Number.isInteger(cls)) return false;
    if (cls < 0 || cls >= task.class_names.length) return false;
    this.staged.set(task.task_id, cls);
    this.advanceFocus();
    return true;
  }

  private advanceFocus(): void {
    for (let step = 1; step <= this.tasks.length; step++) {
      const i = (this.focus + step) % this.tasks.length;
      if (!this.staged.has(this.tasks[i]!.task_id)) {
        this.focus = i;
        return;
      }
    }
  }

  get answered(): number {
    return this.staged.size;
  }

  get remaining(): number {
    return this.size - this.staged.size;
  }

  get progressText(): string {
    return `${this.answered}/${this.size}`;
  }

  get canSubmit(): boolean {
    return this.size > 0 && this.remaining === 0;
  }

  items(): LabelItem[] {
    return this.tasks
      .filter((t) => this.staged.has(t.task_id))
      .map((t) => ({ task_id: t.task_id, class: this.staged.get(t.task_id)! }));
  }
}
