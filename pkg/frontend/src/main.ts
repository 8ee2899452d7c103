/**
 * Viewer application shell: list / detail / growth views over the registry
 * HTTP API. No client-side persistence beyond session settings; mutations
 * render only confirmed server state.
 */

import { RegistryApi, RegistryError, type EpisodeRecord, type FilterState, type GroupBy } from "./api.js";
import { decodePpm } from "./ppm.js";
import {
  cumulativeSeries,
  detailFields,
  growthView,
  listRows,
  paginate,
  showEvalControls,
  stepFrame,
} from "./views.js";

type ViewName = "list" | "detail" | "growth" | "settings";

interface Session {
  api: RegistryApi;
  view: ViewName;
  filter: FilterState;
  includeDeleted: boolean;
  page: number;
  selectedHash: string | null;
  groupBy: GroupBy;
  lastGood: EpisodeRecord[];
  stale: boolean;
  banner: string | null;
}

const session: Session = {
  api: new RegistryApi(
    sessionStorage.getItem("egodb.baseUrl") ?? window.location.origin,
    sessionStorage.getItem("egodb.token"),
  ),
  view: "list",
  filter: {},
  includeDeleted: false,
  page: 0,
  selectedHash: null,
  groupBy: "lab",
  lastGood: [],
  stale: false,
  banner: null,
};

const root = document.getElementById("app")!;
let requestEpoch = 0; // cancels stale async renders after navigation

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

function navigate(view: ViewName, hash: string | null = null): void {
  session.view = view;
  session.selectedHash = hash;
  session.banner = null;
  requestEpoch++;
  render();
}

function render(): void {
  root.replaceChildren(renderNav(), renderBanner(), renderView());
}

function renderNav(): HTMLElement {
  const tab = (view: ViewName, label: string) =>
    el(
      "button",
      { class: session.view === view ? "tab active" : "tab" },
      label,
    );
  const episodes = tab("list", "Episodes");
  episodes.onclick = () => navigate("list");
  const growth = tab("growth", "Growth");
  growth.onclick = () => navigate("growth");
  const settings = tab("settings", "Settings");
  settings.onclick = () => navigate("settings");
  return el("nav", {}, el("span", { class: "brand" }, "egodb viewer"), episodes, growth, settings);
}

function renderBanner(): HTMLElement {
  const banner = el("div", { class: "banner" });
  if (session.banner) {
    banner.classList.add("error");
    banner.textContent = session.banner;
  } else if (session.stale) {
    banner.classList.add("stale");
    banner.textContent = "registry unreachable — showing last known data (stale)";
  }
  return banner;
}

function renderView(): HTMLElement {
  switch (session.view) {
    case "list":
      return renderListView();
    case "detail":
      return renderDetailView();
    case "growth":
      return renderGrowthView();
    case "settings":
      return renderSettingsView();
  }
}

// ----------------------------------------------------------------------------
// list view

function renderListView(): HTMLElement {
  const container = el("section", { class: "view" });
  container.append(renderFilterControls(), el("div", { class: "table-slot" }, "loading…"));
  const epoch = ++requestEpoch;
  session.api
    .listEpisodes(session.filter, session.includeDeleted)
    .then((records) => {
      if (epoch !== requestEpoch) return;
      session.lastGood = records;
      session.stale = false;
      fillTable(container, records);
    })
    .catch(() => {
      if (epoch !== requestEpoch) return;
      session.stale = true;
      fillTable(container, session.lastGood);
      render();
    });
  return container;
}

function fillTable(container: HTMLElement, records: EpisodeRecord[]): void {
  const slot = container.querySelector(".table-slot");
  if (!slot) return;
  const page = paginate(listRows(records), session.page);
  if (page.total === 0) {
    slot.replaceChildren(
      el("div", { class: "empty" }, "No episodes match the current filter."),
    );
    return;
  }
  const head = el(
    "tr",
    {},
    ...["hash", "lab", "task", "scene", "embodiment", "operator", "frames", "status", "flags"].map(
      (label) => el("th", {}, label),
    ),
  );
  const body = page.items.map((row) => {
    const flags = `${row.deleted ? "D" : ""}${row.eval ? "E" : ""}`;
    const tr = el(
      "tr",
      { class: "row" },
      el("td", { class: "mono" }, row.hashShort),
      el("td", {}, row.lab),
      el("td", {}, row.task),
      el("td", {}, row.scene),
      el("td", {}, row.embodiment),
      el("td", {}, row.operator),
      el("td", {}, row.frames === null ? "—" : String(row.frames)),
      el("td", { class: `status ${row.status}` }, row.status),
      el("td", {}, flags),
    );
    tr.onclick = () => navigate("detail", row.hash);
    return tr;
  });
  const pager = el(
    "div",
    { class: "pager" },
    el("span", {}, `${page.total} episodes — page ${page.page + 1}/${page.pageCount}`),
  );
  const prev = el("button", {}, "prev");
  prev.onclick = () => {
    session.page = Math.max(0, session.page - 1);
    render();
  };
  const next = el("button", {}, "next");
  next.onclick = () => {
    session.page = Math.min(page.pageCount - 1, session.page + 1);
    render();
  };
  pager.append(prev, next);
  slot.replaceChildren(el("table", {}, head, ...body), pager);
}

function renderFilterControls(): HTMLElement {
  const controls = el("div", { class: "filters" });
  const text = (name: keyof FilterState, label: string) => {
    const input = el("input", { placeholder: label, value: String(session.filter[name] ?? "") });
    input.onchange = () => {
      const value = input.value.trim();
      if (value) (session.filter as Record<string, unknown>)[name] = value;
      else delete session.filter[name];
    };
    return input;
  };
  controls.append(
    text("task", "task"),
    text("lab", "lab"),
    text("scene", "scene"),
    text("operator", "operator"),
    text("robot_name", "robot name"),
    text("task_description_contains", "description contains"),
  );
  const embodiment = el("select", {},
    el("option", { value: "" }, "any embodiment"),
    el("option", { value: "human" }, "human"),
    el("option", { value: "robot" }, "robot"));
  embodiment.value = session.filter.embodiment ?? "";
  embodiment.onchange = () => {
    if (embodiment.value) session.filter.embodiment = embodiment.value;
    else delete session.filter.embodiment;
  };
  const tri = (name: keyof FilterState, label: string) => {
    const select = el("select", {},
      el("option", { value: "" }, label),
      el("option", { value: "true" }, `${label}: yes`),
      el("option", { value: "false" }, `${label}: no`));
    const current = session.filter[name];
    select.value = current === undefined ? "" : String(current);
    select.onchange = () => {
      if (select.value === "") delete session.filter[name];
      else (session.filter as Record<string, unknown>)[name] = select.value === "true";
    };
    return select;
  };
  controls.append(
    embodiment,
    tri("is_eval", "eval"),
    tri("has_processed_path", "processed"),
    tri("has_processing_error", "error"),
  );
  const deleted = el("label", { class: "inline" });
  const checkbox = el("input", { type: "checkbox" });
  checkbox.checked = session.includeDeleted;
  checkbox.onchange = () => {
    session.includeDeleted = checkbox.checked;
  };
  deleted.append(checkbox, "include deleted");
  const apply = el("button", { class: "primary" }, "Apply");
  apply.onclick = () => {
    session.page = 0;
    render();
  };
  controls.append(deleted, apply);
  return controls;
}

// ----------------------------------------------------------------------------
// detail view

function renderDetailView(): HTMLElement {
  const container = el("section", { class: "view" }, "loading…");
  const hash = session.selectedHash;
  if (!hash) return el("section", { class: "view" }, "no episode selected");
  const epoch = ++requestEpoch;
  session.api
    .getEpisode(hash)
    .then((record) => {
      if (epoch !== requestEpoch) return;
      if (!record) {
        container.replaceChildren(el("div", { class: "empty" }, `episode ${hash} not found`));
        return;
      }
      container.replaceChildren(...buildDetail(record));
    })
    .catch((error) => {
      if (epoch !== requestEpoch) return;
      session.banner = `failed to load episode: ${String(error)}`;
      render();
    });
  return container;
}

function buildDetail(record: EpisodeRecord): HTMLElement[] {
  const back = el("button", {}, "← back to list");
  back.onclick = () => navigate("list");

  const fields = el(
    "table",
    { class: "detail" },
    ...detailFields(record).map((field) =>
      el("tr", {}, el("th", {}, field.label), el("td", { class: "mono" }, field.value)),
    ),
  );

  const actions = el("div", { class: "actions" });
  if (!record.is_deleted) {
    const remove = el("button", { class: "danger" }, "Mark deleted");
    remove.onclick = async () => {
      const ok = window.confirm(
        "Mark this episode deleted? This is a soft delete: queries will hide it, " +
          "but its blobs stay in the store for audit.",
      );
      if (!ok) return;
      try {
        await session.api.markDeleted(record.episode_hash);
        navigate("list");
      } catch (error) {
        showInline(actions, `delete failed: ${describe(error)}`);
      }
    };
    actions.append(remove);
  }
  if (showEvalControls(record)) {
    const score = el("input", { type: "number", step: "0.01", min: "0", max: "1", placeholder: "score" });
    if (record.eval_score !== null) score.value = String(record.eval_score);
    const success = el("input", { type: "checkbox" });
    success.checked = record.eval_success ?? false;
    const save = el("button", { class: "primary" }, "Save eval");
    save.onclick = async () => {
      try {
        const updated = await session.api.recordEval(
          record.episode_hash,
          Number(score.value),
          success.checked,
        );
        root.querySelector("section.view")?.replaceChildren(...buildDetail(updated));
      } catch (error) {
        showInline(actions, `eval update failed: ${describe(error)}`);
      }
    };
    actions.append(
      el("span", { class: "eval-label" }, "evaluation:"),
      score,
      el("label", { class: "inline" }, success, "success"),
      save,
    );
  }

  return [back, el("div", { class: "detail-grid" }, fields, buildPreview(record)), actions];
}

function buildPreview(record: EpisodeRecord): HTMLElement {
  const panel = el("div", { class: "preview" });
  if (!record.mp4_path) {
    panel.append(el("div", { class: "empty" }, "no preview available"));
    return panel;
  }
  const canvas = el("canvas", { width: "256", height: "256" });
  const label = el("div", { class: "frame-label" }, "frame 0");
  let frameCount = 0;
  let current = 0;
  let timer: number | null = null;

  const draw = async (index: number) => {
    try {
      const buffer = await session.api.previewFrame(record.episode_hash, index);
      const image = decodePpm(buffer);
      const ctx = canvas.getContext("2d")!;
      const pixels = ctx.createImageData(image.width, image.height);
      for (let i = 0; i < image.width * image.height; i++) {
        pixels.data[4 * i] = image.rgb[3 * i];
        pixels.data[4 * i + 1] = image.rgb[3 * i + 1];
        pixels.data[4 * i + 2] = image.rgb[3 * i + 2];
        pixels.data[4 * i + 3] = 255;
      }
      const off = new OffscreenCanvas(image.width, image.height);
      off.getContext("2d")!.putImageData(pixels, 0, 0);
      const ctx2 = canvas.getContext("2d")!;
      ctx2.imageSmoothingEnabled = false;
      ctx2.drawImage(off, 0, 0, canvas.width, canvas.height);
      label.textContent = `frame ${index + 1}/${frameCount}`;
    } catch {
      label.textContent = `frame ${index + 1}: unavailable`;
    }
  };

  session.api
    .previewManifest(record.episode_hash)
    .then((manifest) => {
      frameCount = manifest.frames;
      if (frameCount > 0) void draw(0);
      else panel.replaceChildren(el("div", { class: "empty" }, "no preview frames"));
    })
    .catch(() => panel.replaceChildren(el("div", { class: "empty" }, "no preview available")));

  const prev = el("button", {}, "◀");
  prev.onclick = () => {
    current = stepFrame(current, -1, frameCount);
    void draw(current);
  };
  const next = el("button", {}, "▶");
  next.onclick = () => {
    current = stepFrame(current, +1, frameCount);
    void draw(current);
  };
  const play = el("button", {}, "autoplay");
  play.onclick = () => {
    if (timer !== null) {
      window.clearInterval(timer);
      timer = null;
      play.textContent = "autoplay";
      return;
    }
    play.textContent = "stop";
    timer = window.setInterval(() => {
      current = stepFrame(current, +1, frameCount);
      void draw(current);
    }, 250);
  };
  panel.append(canvas, label, el("div", { class: "stepper" }, prev, play, next));
  return panel;
}

// ----------------------------------------------------------------------------
// growth view

function renderGrowthView(): HTMLElement {
  const container = el("section", { class: "view" }, "loading…");
  const epoch = ++requestEpoch;
  Promise.all([
    session.api.stats(session.groupBy),
    session.api.listEpisodes({}, false),
  ])
    .then(([groups, records]) => {
      if (epoch !== requestEpoch) return;
      container.replaceChildren(...buildGrowth(groups, records));
    })
    .catch((error) => {
      if (epoch !== requestEpoch) return;
      container.replaceChildren(
        el("div", { class: "empty" }, `stats unavailable: ${describe(error)}`),
      );
    });
  return container;
}

function buildGrowth(groups: Parameters<typeof growthView>[0], records: EpisodeRecord[]): HTMLElement[] {
  const view = growthView(groups);
  const selector = el("select", {},
    ...(["lab", "task", "embodiment", "scene", "operator"] as GroupBy[]).map((field) =>
      el("option", { value: field }, field)));
  selector.value = session.groupBy;
  selector.onchange = () => {
    session.groupBy = selector.value as GroupBy;
    render();
  };
  const header = el(
    "div",
    { class: "growth-header" },
    el("span", {}, "group by "),
    selector,
    el("span", { class: "totals" },
      `${view.totalEpisodes} episodes · ${view.totalFrames} frames total`),
  );
  if (view.bars.length === 0) {
    return [header, el("div", { class: "empty" }, "no data yet — the chart fills as episodes arrive")];
  }
  const chart = el(
    "div",
    { class: "bars" },
    ...view.bars.map((bar) =>
      el(
        "div",
        { class: "bar-row" },
        el("span", { class: "bar-label" }, bar.value),
        el("div", { class: "bar-track" },
          el("div", { class: "bar-fill", style: `width: ${Math.round(bar.episodeShare * 100)}%` })),
        el("span", { class: "bar-count" }, `${bar.episodes} ep · ${bar.frames} frames`),
      ),
    ),
  );
  const series = cumulativeSeries(records);
  const line = el("div", { class: "cumulative" }, buildCumulativeSvg(series));
  return [header, chart, el("h3", {}, "cumulative episodes over upload time"), line];
}

function buildCumulativeSvg(series: ReturnType<typeof cumulativeSeries>): SVGSVGElement {
  const svgNs = "http://www.w3.org/2000/svg";
  const svg = document.createElementNS(svgNs, "svg");
  svg.setAttribute("viewBox", "0 0 400 120");
  svg.setAttribute("class", "cumulative-svg");
  if (series.length === 0) return svg;
  const t0 = series[0].uploadedAtNs;
  const t1 = series[series.length - 1].uploadedAtNs;
  const span = Math.max(1, t1 - t0);
  const maxCount = series[series.length - 1].count;
  const points = series
    .map((point) => {
      const x = 10 + (380 * (point.uploadedAtNs - t0)) / span;
      const y = 110 - (100 * point.count) / maxCount;
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
  const polyline = document.createElementNS(svgNs, "polyline");
  polyline.setAttribute("points", points);
  polyline.setAttribute("fill", "none");
  polyline.setAttribute("stroke", "currentColor");
  polyline.setAttribute("stroke-width", "2");
  svg.append(polyline);
  return svg;
}

// ----------------------------------------------------------------------------
// settings

function renderSettingsView(): HTMLElement {
  const url = el("input", { value: session.api.baseUrl, size: "40" });
  const token = el("input", {
    value: session.api.token ?? "",
    size: "40",
    placeholder: "bearer token (session storage only)",
  });
  const save = el("button", { class: "primary" }, "Save");
  save.onclick = () => {
    session.api = new RegistryApi(url.value, token.value || null);
    sessionStorage.setItem("egodb.baseUrl", url.value);
    if (token.value) sessionStorage.setItem("egodb.token", token.value);
    else sessionStorage.removeItem("egodb.token");
    navigate("list");
  };
  return el(
    "section",
    { class: "view settings" },
    el("h3", {}, "Registry connection"),
    el("label", {}, "registry URL ", url),
    el("label", {}, "token ", token),
    save,
  );
}

function describe(error: unknown): string {
  return error instanceof RegistryError ? `${error.kind}: ${error.message}` : String(error);
}

function showInline(anchor: HTMLElement, message: string): void {
  const note = el("div", { class: "inline-error" }, message);
  anchor.append(note);
  window.setTimeout(() => note.remove(), 5000);
}

render();
