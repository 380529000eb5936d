/** DOM rendering and keyboard wiring for the review loop.
 *
 * Keys: d = duplicate, n = not a duplicate, u = undo, b = blink the two
 * images on top of each other (difference toggle), r = retry a failed sync.
 */

import { CuratorApi } from "./api.js";
import { ReviewSession } from "./store.js";

export class ReviewApp {
  private blinkTimer: ReturnType<typeof setInterval> | null = null;
  private showRight = false;

  constructor(
    private root: HTMLElement,
    private session: ReviewSession,
    private api: CuratorApi,
  ) {}

  mount(): void {
    this.root.innerHTML = `
      <header>
        <h1>Duplicate review</h1>
        <div id="estimate-panel" class="estimate" title="estimated true duplicates"></div>
      </header>
      <div id="banner" class="banner hidden"></div>
      <main>
        <section id="pair-area" class="pair-area"></section>
        <aside class="help">
          <p><b>d</b> duplicate &middot; <b>n</b> not a duplicate &middot;
             <b>u</b> undo &middot; <b>b</b> blink compare &middot; <b>r</b> retry</p>
          <div id="session-counts"></div>
        </aside>
      </main>
    `;
    this.session.subscribe(() => this.render());
    document.addEventListener("keydown", (event) => this.onKey(event));
    this.render();
  }

  private onKey(event: KeyboardEvent): void {
    if (event.ctrlKey || event.metaKey || event.altKey) return;
    switch (event.key.toLowerCase()) {
      case "d":
        void this.session.submit("true-duplicate");
        break;
      case "n":
        void this.session.submit("not-duplicate");
        break;
      case "u":
        this.session.undo();
        break;
      case "b":
        this.toggleBlink();
        break;
      case "r":
        void this.session.retry();
        break;
      default:
        return;
    }
    event.preventDefault();
  }

  private toggleBlink(): void {
    if (this.blinkTimer !== null) {
      clearInterval(this.blinkTimer);
      this.blinkTimer = null;
    } else {
      this.blinkTimer = setInterval(() => {
        this.showRight = !this.showRight;
        const overlay = this.root.querySelector<HTMLElement>("#overlay-right");
        if (overlay) overlay.style.opacity = this.showRight ? "1" : "0";
      }, 500);
    }
    this.render();
  }

  private render(): void {
    const pair = this.session.current();
    const estimate = this.session.liveEstimate();
    const panel = this.root.querySelector<HTMLElement>("#estimate-panel");
    if (panel) {
      const tally = estimate.split === null ? undefined : this.session.tallyFor(estimate.split);
      const detail =
        tally === undefined
          ? ""
          : ` (${tally.confirmed}/${tally.reviewed} of ${tally.candidates})`;
      panel.textContent = `estimated duplicates: ${estimate.text}${detail}`;
    }

    const banner = this.root.querySelector<HTMLElement>("#banner");
    if (banner) {
      if (this.session.lastError !== null) {
        banner.textContent = this.session.retryable
          ? `sync failed: ${this.session.lastError} - press r to retry`
          : `verdict rejected: ${this.session.lastError}`;
        banner.classList.remove("hidden");
      } else {
        banner.classList.add("hidden");
      }
    }

    const counts = this.root.querySelector<HTMLElement>("#session-counts");
    if (counts) {
      const c = this.session.counts;
      counts.textContent =
        `this session: ${c.submitted} submitted, ${c.confirmed} duplicates, ` +
        `${c.notDuplicate} not`;
    }

    const area = this.root.querySelector<HTMLElement>("#pair-area");
    if (!area) return;
    if (pair === null) {
      area.innerHTML = `<p class="drained">queue drained - reload for more pairs</p>`;
      return;
    }
    const blinking = this.blinkTimer !== null;
    area.innerHTML = `
      <div class="pair-meta">
        <span class="badge">${pair.split}</span>
        <span>hamming distance ${pair.distance}</span>
        <span>${this.session.cursor + 1} / ${this.session.queue.length}</span>
        <span class="sync">${this.session.syncState === "syncing" ? "syncing..." : ""}</span>
      </div>
      <div class="images ${blinking ? "blink-mode" : ""}">
        <figure>
          <img src="${this.api.imageUrl(pair.left_id)}" alt="${pair.left_id}">
          <figcaption>${pair.left_id} (augmentation)</figcaption>
        </figure>
        <figure class="${blinking ? "overlay" : ""}">
          <img id="overlay-right" src="${this.api.imageUrl(pair.right_id)}" alt="${pair.right_id}">
          <figcaption>${pair.right_id} (target split)</figcaption>
        </figure>
      </div>
      <div class="verdict-buttons">
        <button id="btn-dup">duplicate (d)</button>
        <button id="btn-not">not a duplicate (n)</button>
        <button id="btn-undo">undo (u)</button>
      </div>
    `;
    area.querySelector("#btn-dup")?.addEventListener("click", () => {
      void this.session.submit("true-duplicate");
    });
    area.querySelector("#btn-not")?.addEventListener("click", () => {
      void this.session.submit("not-duplicate");
    });
    area.querySelector("#btn-undo")?.addEventListener("click", () => this.session.undo());
  }
}
