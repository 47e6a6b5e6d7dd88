// DOM wiring and view state. One state machine drives the page:
//
//   idle -> preview -> loading -> result
//                          \-> error (retry returns to loading)
//
// A cancelled file dialog leaves the state unchanged, and the selected
// image survives an error so retry resubmits the same file.

import { Prediction, ServiceError, predictImage } from "./api";
import { renderError, renderLoading, renderResult, resultView } from "./view";

export type Phase = "idle" | "preview" | "loading" | "result" | "error";

export interface ViewState {
  phase: Phase;
  file: File | null;
  prediction: Prediction | null;
  errorStatus: number;
  errorMessage: string | null;
}

export function initialState(): ViewState {
  return { phase: "idle", file: null, prediction: null, errorStatus: 0, errorMessage: null };
}

const SKELETON = `
<header>
  <h1>🌿 Leaf Disease Checker</h1>
  <p class="tagline">Photograph a leaf and get a color-coded diagnosis.</p>
</header>
<div class="controls">
  <label class="button">Choose image
    <input id="file-input" type="file" accept="image/*" hidden>
  </label>
  <label class="button">Use camera
    <input id="camera-input" type="file" accept="image/*" capture="environment" hidden>
  </label>
</div>
<div id="preview"></div>
<button id="submit-button" type="button" disabled>Diagnose</button>
<div id="result" aria-live="polite"></div>
`;

export class App {
  state: ViewState = initialState();

  private readonly preview: HTMLElement;
  private readonly submitButton: HTMLButtonElement;
  private readonly result: HTMLElement;

  constructor(
    private readonly doc: Document,
    root: HTMLElement,
    private readonly baseUrl = "",
    private readonly predictFn: typeof predictImage = predictImage
  ) {
    root.innerHTML = SKELETON;
    this.preview = root.querySelector("#preview") as HTMLElement;
    this.submitButton = root.querySelector("#submit-button") as HTMLButtonElement;
    this.result = root.querySelector("#result") as HTMLElement;

    for (const id of ["#file-input", "#camera-input"]) {
      const input = root.querySelector(id) as HTMLInputElement;
      input.addEventListener("change", () => this.onFileChosen(input));
    }
    this.submitButton.addEventListener("click", () => void this.submit());
  }

  private onFileChosen(input: HTMLInputElement): void {
    const file = input.files && input.files[0];
    if (!file) return;
    this.state = { ...initialState(), phase: "preview", file };
    this.result.innerHTML = "";
    this.submitButton.disabled = false;
    this.showPreview(file);
  }

  private showPreview(file: File): void {
    const reader = new FileReader();
    reader.onload = () => {
      if (this.state.file !== file) return;
      this.preview.innerHTML =
        `<img class="preview-image" alt="selected leaf image" src="${reader.result}">`;
    };
    reader.readAsDataURL(file);
  }

  async submit(): Promise<void> {
    if (this.state.phase === "loading" || !this.state.file) return;
    const file = this.state.file;
    this.state = { ...this.state, phase: "loading", prediction: null, errorMessage: null };
    this.submitButton.disabled = true;
    this.result.innerHTML = renderLoading();
    try {
      const prediction = await this.predictFn(file, this.baseUrl);
      this.state = { ...this.state, phase: "result", prediction };
      this.result.innerHTML = renderResult(resultView(prediction));
    } catch (err) {
      const status = err instanceof ServiceError ? err.status : 0;
      const message = (err as Error).message || "request failed";
      this.state = { ...this.state, phase: "error", errorStatus: status, errorMessage: message };
      this.result.innerHTML = renderError(status, message);
      const retry = this.doc.getElementById("retry-button");
      if (retry) retry.addEventListener("click", () => void this.submit());
    } finally {
      this.submitButton.disabled = false;
    }
  }
}

/** Mount the app into `#app`. Returns the App for tests; null when the
 * mount point does not exist. */
export function initApp(doc: Document, baseUrl = "", predictFn?: typeof predictImage): App | null {
  const root = doc.getElementById("app");
  if (!root) return null;
  return new App(doc, root, baseUrl, predictFn ?? predictImage);
}
