/**
 * Typed client for the registry HTTP API.
 *
 * Every mutation the viewer performs maps onto exactly one documented
 * endpoint; the viewer keeps no server state of its own.
 */

export interface EpisodeRecord {
  episode_hash: string;
  operator: string;
  lab: string;
  task: string;
  scene: string;
  embodiment: "human" | "robot";
  robot_name: string | null;
  task_description: string;
  objects: string[];
  num_frames: number | null;
  processed_path: string | null;
  mp4_path: string | null;
  processing_error: string | null;
  is_deleted: boolean;
  is_eval: boolean;
  eval_score: number | null;
  eval_success: boolean | null;
  // registry-side extras exposed on the HTTP surface
  uploaded_at_ns?: number | null;
  raw_path?: string | null;
  processing_attempts?: number;
}

export interface GroupStats {
  value: string;
  episode_count: number;
  total_frames: number;
}

export type GroupBy = "lab" | "task" | "embodiment" | "scene" | "operator";

/** Mirrors the registry's EpisodeFilter query parameters field for field. */
export interface FilterState {
  operator?: string;
  lab?: string;
  task?: string;
  scene?: string;
  embodiment?: string;
  robot_name?: string;
  is_deleted?: boolean;
  is_eval?: boolean;
  has_processed_path?: boolean;
  has_processing_error?: boolean;
  task_description_contains?: string;
}

export function filterToParams(filter: FilterState, includeDeleted = false): URLSearchParams {
  const params = new URLSearchParams();
  for (const [key, value] of Object.entries(filter)) {
    if (value === undefined || value === null || value === "") continue;
    params.set(key, typeof value === "boolean" ? String(value) : String(value));
  }
  if (includeDeleted) params.set("include_deleted", "true");
  return params;
}

export class RegistryError extends Error {
  constructor(
    public status: number,
    public kind: string,
    message: string,
  ) {
    super(message);
  }
}

export class RegistryApi {
  constructor(
    public baseUrl: string,
    public token: string | null = null,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    if (!response.ok) {
      let kind = "internal";
      let message = `HTTP ${response.status}`;
      try {
        const doc = JSON.parse(text);
        kind = doc.kind ?? kind;
        message = doc.error ?? message;
      } catch {
        /* non-JSON error body */
      }
      throw new RegistryError(response.status, kind, message);
    }
    return JSON.parse(text) as T;
  }

  async listEpisodes(filter: FilterState = {}, includeDeleted = false): Promise<EpisodeRecord[]> {
    const params = filterToParams(filter, includeDeleted);
    const query = params.toString();
    const payload = await this.request<{ episodes: EpisodeRecord[] }>(
      "GET",
      `/episodes${query ? "?" + query : ""}`,
    );
    return payload.episodes;
  }

  /** The registry has no per-hash read; detail views reuse the list endpoint. */
  async getEpisode(hash: string): Promise<EpisodeRecord | null> {
    const episodes = await this.listEpisodes({}, true);
    return episodes.find((episode) => episode.episode_hash === hash) ?? null;
  }

  async register(record: EpisodeRecord): Promise<string> {
    const payload = await this.request<{ episode_hash: string }>("POST", "/episodes", record);
    return payload.episode_hash;
  }

  async markDeleted(hash: string): Promise<EpisodeRecord> {
    return this.request<EpisodeRecord>("PATCH", `/episodes/${hash}/deleted`, {});
  }

  async recordEval(hash: string, score: number, success: boolean): Promise<EpisodeRecord> {
    return this.request<EpisodeRecord>("PATCH", `/episodes/${hash}/eval`, {
      eval_score: score,
      eval_success: success,
    });
  }

  async stats(groupBy: GroupBy): Promise<GroupStats[]> {
    const payload = await this.request<{ groups: GroupStats[] }>(
      "GET",
      `/stats?group_by=${groupBy}`,
    );
    return payload.groups;
  }

  async previewManifest(hash: string): Promise<{ frames: number }> {
    return this.request<{ frames: number }>("GET", `/episodes/${hash}/preview`);
  }

  /** Fetch one preview frame as bytes (PPM); lets the token header apply. */
  async previewFrame(hash: string, index: number): Promise<ArrayBuffer> {
    const response = await fetch(`${this.baseUrl}/episodes/${hash}/preview/${index}`, {
      headers: this.token ? { Authorization: `Bearer ${this.token}` } : {},
    });
    if (!response.ok) throw new RegistryError(response.status, "not_found", "no such frame");
    return response.arrayBuffer();
  }
}
