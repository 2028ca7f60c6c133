// Queue view: thumbnails of the pending tasks, keyboard-first labeling.
// Digit keys label the focused image, arrows move focus, Enter submits the
// full batch. Submission stays blocked until every task has a staged class.

import type { LabelItem, LabelTask } from "./api.js";
import { LabelingRound } from "./state.js";

export class QueueView {
  round: LabelingRound = new LabelingRound([]);
  private errorText = "";

  constructor(
    private readonly container: HTMLElement,
    private readonly onSubmit: (items: LabelItem[]) => void,
  ) {}

  setTasks(tasks: LabelTask[]): void {
    this.round = new LabelingRound(tasks);
    this.errorText = "";
    this.render();
  }

  showError(message: string): void {
    // staged labels survive: only the banner changes
    this.errorText = message;
    this.render();
  }

  handleKey(key: string): void {
    if (key === "ArrowRight") {
      this.round.setFocus(this.round.focusIndex + 1);
    } else if (key === "ArrowLeft") {
      this.round.setFocus(this.round.focusIndex - 1);
    } else if (key === "Enter") {
      this.submit();
      return;
    } else if (/^[0-9]$/.test(key)) {
      this.round.stage(Number(key));
    } else {
      return;
    }
    this.render();
  }

  submit(): void {
    if (!this.round.canSubmit) {
      this.showError(`${this.round.remaining} of ${this.round.size} still unlabeled`);
      return;
    }
    this.onSubmit(this.round.items());
  }

  render(): void {
    const doc = this.container.ownerDocument;
    this.container.textContent = "";

    const header = doc.createElement("div");
    header.className = "queue-header";
    const progress = doc.createElement("span");
    progress.className = "progress";
    progress.textContent = `labeled ${this.round.progressText}`;
    header.appendChild(progress);
    this.container.appendChild(header);

    if (this.errorText) {
      const banner = doc.createElement("div");
      banner.className = "error-banner";
      banner.textContent = this.errorText;
      this.container.appendChild(banner);
    }

    const list = doc.createElement("div");
    list.className = "task-list";
    this.round.tasks.forEach((task, index) => {
      list.appendChild(this.renderTask(doc, task, index));
    });
    this.container.appendChild(list);

    const classBar = doc.createElement("div");
    classBar.className = "class-bar";
    this.round.classNames.forEach((name, cls) => {
      const button = doc.createElement("button");
      button.className = "class-button";
      button.textContent = `${cls}: ${name}`;
      button.addEventListener("click", () => {
        this.round.stage(cls);
        this.render();
      });
      classBar.appendChild(button);
    });
    this.container.appendChild(classBar);

    const submit = doc.createElement("button");
    submit.className = "submit-button";
    submit.textContent = `submit round${this.round.canSubmit ? "" : ` (${this.round.remaining} left)`}`;
    submit.disabled = !this.round.canSubmit;
    submit.addEventListener("click", () => this.submit());
    this.container.appendChild(submit);
  }

  private renderTask(doc: Document, task: LabelTask, index: number): HTMLElement {
    const figure = doc.createElement("figure");
    figure.className = "task" + (index === this.round.focusIndex ? " focused" : "");
    figure.dataset.taskId = task.task_id;
    figure.addEventListener("click", () => {
      this.round.setFocus(index);
      this.render();
    });

    if (task.png_base64) {
      const img = doc.createElement("img");
      img.className = "thumb";
      img.src = `data:image/png;base64,${task.png_base64}`;
      img.alt = `example ${task.example_id}`;
      figure.appendChild(img);
    } else if (task.grid) {
      figure.appendChild(renderGrid(doc, task.grid));
    } else {
      const pre = doc.createElement("pre");
      pre.className = "thumb features";
      pre.textContent = task.features.map((v) => v.toFixed(2)).join(" ");
      figure.appendChild(pre);
    }

    const caption = doc.createElement("figcaption");
    const staged = this.round.stagedClass(task.task_id);
    caption.textContent =
      staged === undefined
        ? `#${task.example_id}`
        : `#${task.example_id} -> ${task.class_names[staged]}`;
    if (staged !== undefined) caption.className = "staged";
    figure.appendChild(caption);
    return figure;
  }
}

function renderGrid(doc: Document, grid: number[][]): HTMLElement {
  const table = doc.createElement("table");
  table.className = "thumb grid";
  for (const row of grid) {
    const tr = doc.createElement("tr");
    for (const value of row) {
      const td = doc.createElement("td");
      const v = 255 - Math.max(0, Math.min(255, Math.round(value)));
      td.style.backgroundColor = `rgb(${v},${v},${v})`;
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
  return table;
}
