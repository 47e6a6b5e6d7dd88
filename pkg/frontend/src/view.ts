// Pure view-model and rendering functions. Everything here maps service
// JSON to HTML strings with no DOM access, so the result and error views
// are testable from stored fixture responses alone.
//
// The UI never classifies: banner color, status emoji, and status text
// are taken from the service response verbatim, never recomputed from
// probabilities or a client-side class table.

import { Prediction } from "./api";

export interface ResultView {
  bannerColor: "green" | "red";
  statusEmoji: string;
  statusText: string;
  plantEmoji: string;
  plant: string;
  condition: string;
  confidenceText: string;
  topK: { label: string; percentText: string }[];
}

/** Whole-percent rendering for the headline confidence: 0.97 -> "97%". */
export function percent(fraction: number): string {
  return `${Math.round(fraction * 100)}%`;
}

/** One-decimal rendering for the top-k breakdown: 0.0517 -> "5.2%". */
export function finePercent(fraction: number): string {
  return `${(fraction * 100).toFixed(1)}%`;
}

export function resultView(p: Prediction): ResultView {
  return {
    bannerColor: p.status_color,
    statusEmoji: p.status_emoji,
    statusText: p.healthy ? "Healthy" : "Diseased",
    plantEmoji: p.plant_emoji,
    plant: p.plant,
    condition: p.condition,
    confidenceText: percent(p.confidence),
    topK: p.top_k.map((entry) => ({
      label: `${entry.plant} / ${entry.condition}`,
      percentText: finePercent(entry.probability),
    })),
  };
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Result panel: status dominates visually (emoji + color + text), the
 * confidence and top-k breakdown are secondary. */
export function renderResult(view: ResultView): string {
  const rows = view.topK
    .map(
      (entry) =>
        `<li><span class="top-k-label">${escapeHtml(entry.label)}</span>` +
        `<span class="top-k-percent">${entry.percentText}</span></li>`
    )
    .join("");
  return (
    `<div class="result-banner ${view.bannerColor}" role="status">` +
    `<div class="status-line"><span class="status-emoji">${view.statusEmoji}</span>` +
    `<span class="status-text">${escapeHtml(view.statusText)}</span></div>` +
    `<div class="plant-line"><span class="plant-emoji">${view.plantEmoji}</span>` +
    `<span class="plant-name">${escapeHtml(view.plant)}</span></div>` +
    `<div class="condition-line">${escapeHtml(view.condition)}</div>` +
    `<div class="confidence-line">Confidence: ` +
    `<span class="confidence">${view.confidenceText}</span></div>` +
    `<ol class="top-k">${rows}</ol>` +
    `</div>`
  );
}

/** Error banner with the status code when one exists and a retry button
 * so the selected image can be resubmitted. */
export function renderError(status: number, detail: string): string {
  const heading = status > 0 ? `Error ${status}` : "Error";
  return (
    `<div class="error-banner" role="alert">` +
    `<div class="error-heading">${heading}</div>` +
    `<div class="error-detail">${escapeHtml(detail)}</div>` +
    `<button type="button" id="retry-button">Retry</button>` +
    `</div>`
  );
}

export function renderLoading(): string {
  return `<div class="loading" role="status">Analyzing leaf image&hellip;</div>`;
}
