import { Api } from "./api";
import { App } from "./app";

const root = document.getElementById("app");
if (root) {
  // same-origin when served from the detection service's /ui mount
  const api = new Api("");
  const app = new App(root, api);
  void app.start().then(() => app.refreshProtoList());
}
