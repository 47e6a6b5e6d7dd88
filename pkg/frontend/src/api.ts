// Client for the inference service. The UI consumes exactly two
// endpoints: POST /predict and GET /classes.

export interface TopEntry {
  class_index: number;
  plant: string;
  condition: string;
  probability: number;
}

export interface Prediction {
  class_index: number;
  plant: string;
  condition: string;
  healthy: boolean;
  confidence: number;
  plant_emoji: string;
  status_emoji: string;
  status_color: "green" | "red";
  top_k: TopEntry[];
}

export interface ClassRecord {
  class_index: number;
  plant: string;
  condition: string;
  healthy: boolean;
  directory_name: string;
  plant_emoji: string;
}

/** Error from the service or from a malformed response. `status` is the
 * HTTP status code, or 0 when the request never produced a response. */
export class ServiceError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
    this.name = "ServiceError";
  }
}

const PREDICTION_FIELDS: [string, string][] = [
  ["class_index", "number"],
  ["plant", "string"],
  ["condition", "string"],
  ["healthy", "boolean"],
  ["confidence", "number"],
  ["plant_emoji", "string"],
  ["status_emoji", "string"],
  ["status_color", "string"],
];

/** Validate a /predict response body. Throws ServiceError(0, ...) on any
 * missing or mistyped field so the caller shows an error banner instead
 * of rendering a partial result. */
export function parsePrediction(data: unknown): Prediction {
  if (typeof data !== "object" || data === null) {
    throw new ServiceError(0, "malformed response: not a JSON object");
  }
  const record = data as Record<string, unknown>;
  for (const [field, kind] of PREDICTION_FIELDS) {
    if (typeof record[field] !== kind) {
      throw new ServiceError(0, `malformed response: missing field '${field}'`);
    }
  }
  if (record.status_color !== "green" && record.status_color !== "red") {
    throw new ServiceError(0, "malformed response: bad status_color");
  }
  if (!Array.isArray(record.top_k)) {
    throw new ServiceError(0, "malformed response: missing field 'top_k'");
  }
  for (const entry of record.top_k) {
    if (
      typeof entry !== "object" || entry === null ||
      typeof entry.class_index !== "number" ||
      typeof entry.plant !== "string" ||
      typeof entry.condition !== "string" ||
      typeof entry.probability !== "number"
    ) {
      throw new ServiceError(0, "malformed response: bad top_k entry");
    }
  }
  return record as unknown as Prediction;
}

async function errorDetail(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") return body.detail;
  } catch {
    // non-JSON error body; fall through to the status text
  }
  return resp.statusText || "request failed";
}

/** POST an image to /predict as a multipart form with an `image` field. */
export async function predictImage(image: Blob, baseUrl = ""): Promise<Prediction> {
  const form = new FormData();
  form.append("image", image, "upload.png");
  let resp: Response;
  try {
    resp = await fetch(`${baseUrl}/predict`, { method: "POST", body: form });
  } catch (err) {
    throw new ServiceError(0, `service unreachable: ${(err as Error).message}`);
  }
  if (!resp.ok) {
    throw new ServiceError(resp.status, await errorDetail(resp));
  }
  return parsePrediction(await resp.json());
}

/** GET the 38-class table. */
export async function fetchClasses(baseUrl = ""): Promise<ClassRecord[]> {
  let resp: Response;
  try {
    resp = await fetch(`${baseUrl}/classes`);
  } catch (err) {
    throw new ServiceError(0, `service unreachable: ${(err as Error).message}`);
  }
  if (!resp.ok) {
    throw new ServiceError(resp.status, await errorDetail(resp));
  }
  const data = await resp.json();
  if (!Array.isArray(data)) {
    throw new ServiceError(0, "malformed response: expected a JSON array");
  }
  return data as ClassRecord[];
}
