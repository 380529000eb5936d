import { CuratorApi } from "./api.js";
import { ReviewSession, KeyValueStore } from "./store.js";
import { ReviewApp } from "./ui.js";

const browserStorage: KeyValueStore = {
  get: (key) => window.localStorage.getItem(key),
  set: (key, value) => window.localStorage.setItem(key, value),
  remove: (key) => window.localStorage.removeItem(key),
};

async function boot(): Promise<void> {
  const api = new CuratorApi(""); // same origin: assets are served by the curator service
  const session = new ReviewSession(api, browserStorage, "review-ui");
  const app = new ReviewApp(document.getElementById("app") as HTMLElement, session, api);
  app.mount();
  await session.init(100);
  setInterval(() => void session.reconcile(), 15_000);
}

void boot();
