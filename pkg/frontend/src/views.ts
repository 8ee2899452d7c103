/**
 * Pure view-model logic for the three views. Rendering is elsewhere; these
 * functions are plain data transforms so they can be tested headlessly.
 */

import type { EpisodeRecord, GroupStats } from "./api.js";

// ----------------------------------------------------------------------------
// list view

export type EpisodeStatus = "processed" | "error" | "pending";

export interface ListRow {
  hash: string;
  hashShort: string;
  lab: string;
  task: string;
  scene: string;
  embodiment: string;
  operator: string;
  frames: number | null;
  status: EpisodeStatus;
  deleted: boolean;
  eval: boolean;
}

export function statusOf(record: EpisodeRecord): EpisodeStatus {
  if (record.processed_path) return "processed";
  if (record.processing_error) return "error";
  return "pending";
}

export function listRows(records: EpisodeRecord[]): ListRow[] {
  return records.map((record) => ({
    hash: record.episode_hash,
    hashShort: record.episode_hash.slice(0, 12),
    lab: record.lab,
    task: record.task,
    scene: record.scene,
    embodiment: record.embodiment,
    operator: record.operator,
    frames: record.num_frames,
    status: statusOf(record),
    deleted: record.is_deleted,
    eval: record.is_eval,
  }));
}

export interface Page<T> {
  items: T[];
  page: number;
  pageCount: number;
  total: number;
}

export function paginate<T>(items: T[], page: number, pageSize = 25): Page<T> {
  const pageCount = Math.max(1, Math.ceil(items.length / pageSize));
  const clamped = Math.min(Math.max(page, 0), pageCount - 1);
  return {
    items: items.slice(clamped * pageSize, (clamped + 1) * pageSize),
    page: clamped,
    pageCount,
    total: items.length,
  };
}

// ----------------------------------------------------------------------------
// detail view

export interface DetailField {
  label: string;
  value: string;
}

export function detailFields(record: EpisodeRecord): DetailField[] {
  const show = (value: unknown): string =>
    value === null || value === undefined || value === "" ? "—" : String(value);
  return [
    { label: "episode_hash", value: record.episode_hash },
    { label: "operator", value: show(record.operator) },
    { label: "lab", value: show(record.lab) },
    { label: "task", value: show(record.task) },
    { label: "scene", value: show(record.scene) },
    { label: "embodiment", value: show(record.embodiment) },
    { label: "robot_name", value: show(record.robot_name) },
    { label: "task_description", value: show(record.task_description) },
    { label: "objects", value: record.objects.length ? record.objects.join(", ") : "—" },
    { label: "num_frames", value: show(record.num_frames) },
    { label: "status", value: statusOf(record) },
    { label: "processed_path", value: show(record.processed_path) },
    { label: "processing_error", value: show(record.processing_error) },
    { label: "is_deleted", value: String(record.is_deleted) },
    { label: "is_eval", value: String(record.is_eval) },
    { label: "eval_score", value: show(record.eval_score) },
    { label: "eval_success", value: show(record.eval_success) },
  ];
}

/** Eval entry controls exist only for evaluation episodes. */
export function showEvalControls(record: EpisodeRecord): boolean {
  return record.is_eval;
}

/** Preview stepper: wrapping next/previous over a frame count. */
export function stepFrame(current: number, delta: number, frameCount: number): number {
  if (frameCount <= 0) return 0;
  return ((current + delta) % frameCount + frameCount) % frameCount;
}

// ----------------------------------------------------------------------------
// growth view

export interface GrowthBar {
  value: string;
  episodes: number;
  frames: number;
  /** bar length in [0, 1] relative to the largest group */
  episodeShare: number;
}

export interface GrowthView {
  bars: GrowthBar[];
  totalEpisodes: number;
  totalFrames: number;
}

export function growthView(groups: GroupStats[]): GrowthView {
  const maxEpisodes = Math.max(1, ...groups.map((group) => group.episode_count));
  return {
    bars: groups.map((group) => ({
      value: group.value,
      episodes: group.episode_count,
      frames: group.total_frames,
      episodeShare: group.episode_count / maxEpisodes,
    })),
    totalEpisodes: groups.reduce((sum, group) => sum + group.episode_count, 0),
    totalFrames: groups.reduce((sum, group) => sum + group.total_frames, 0),
  };
}

export interface CumulativePoint {
  uploadedAtNs: number;
  count: number;
}

/** Cumulative episode count over upload time (records without a timestamp are skipped). */
export function cumulativeSeries(records: EpisodeRecord[]): CumulativePoint[] {
  const stamped = records
    .filter((record) => record.uploaded_at_ns !== null && record.uploaded_at_ns !== undefined)
    .sort((a, b) => Number(a.uploaded_at_ns) - Number(b.uploaded_at_ns));
  return stamped.map((record, index) => ({
    uploadedAtNs: Number(record.uploaded_at_ns),
    count: index + 1,
  }));
}
