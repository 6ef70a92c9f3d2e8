import { ApiClient, ApiError } from "./api.js";
import { authorLine, progressLabel, reportCells, similarityLabel, stageLabel, truncate } from "./format.js";
import { actionFor } from "./keys.js";
import { ScreeningQueue } from "./queue.js";
const VIEWS = ["queue", "conflicts", "duplicates", "venues", "dashboard"];
const RANKS = ["A*", "A", "B", "C", "ranked-other", "unranked"];
let currentView = "queue";
let currentStage = "title";
let closeSummary = "";
const client = new ApiClient({
    onResponse: () => {
        const el = document.getElementById("sync");
        if (el)
            el.textContent = `last sync ${new Date().toLocaleTimeString()}`;
    },
});
const queue = new ScreeningQueue((item, verdict) => client.decide(rater(), item.article_id, currentStage, verdict).then(() => undefined), renderQueue);
function rater() {
    const el = document.getElementById("rater");
    return el ? el.value.trim() : "";
}
function escapeHtml(text) {
    const div = document.createElement("div");
    div.textContent = text;
    return div.innerHTML;
}
function setStatus(message, isError = false) {
    const el = document.getElementById("status");
    if (!el)
        return;
    el.textContent = message;
    el.classList.toggle("error", isError);
}
function describeError(error) {
    if (error instanceof ApiError)
        return `${error.code}: ${error.message}`;
    return error instanceof Error ? error.message : String(error);
}
// --- queue view ------------------------------------------------------------
async function loadQueue() {
    if (!rater()) {
        setStatus("enter a rater name to load the queue", true);
        return;
    }
    try {
        const response = await client.queue(rater(), currentStage);
        queue.load(response.queue);
        closeSummary = "";
        setStatus(`${response.total} articles waiting at ${stageLabel(currentStage)} screening`);
    }
    catch (error) {
        setStatus(describeError(error), true);
    }
}
function renderQueue() {
    const view = document.getElementById("view");
    if (!view || currentView !== "queue")
        return;
    const state = queue.state();
    const item = state.item;
    if (!item) {
        view.innerHTML = `
      <div class="card empty">
        <p>${state.total === 0 ? "No articles loaded. Pick a stage and press load." : "All decisions recorded."}</p>
        ${closeSummary ? `<p>${escapeHtml(closeSummary)}</p>` : ""}
        <div class="actions">
          <button id="btn-load" class="btn">Load queue <kbd>R</kbd></button>
          <button id="btn-close" class="btn warn">Close stage <kbd>C</kbd></button>
        </div>
        ${state.error ? `<p class="error">${escapeHtml(state.error)}</p>` : ""}
      </div>`;
        wireQueueButtons();
        return;
    }
    const badges = (item.missing_metadata ?? [])
        .map((gap) => `<span class="badge gap">${escapeHtml(gap)} missing</span>`)
        .join("");
    view.innerHTML = `
    <div class="card">
      <div class="progress">${progressLabel(state.position, state.total)}${state.pending ? " · saving…" : ""}</div>
      <h2>${escapeHtml(item.title)}</h2>
      <p class="byline">${escapeHtml(authorLine(item.authors, item.year))}</p>
      ${item.venue ? `<p class="venue">${escapeHtml(item.venue)}</p>` : ""}
      <div class="meta">${badges}</div>
      ${item.abstract ? `<p class="abstract">${escapeHtml(truncate(item.abstract, 900))}</p>` : ""}
      ${item.url ? `<p><a href="${escapeHtml(item.url)}" target="_blank" rel="noopener">open source page</a></p>` : ""}
      <div class="actions">
        <button id="btn-include" class="btn include">Include <kbd>I</kbd></button>
        <button id="btn-exclude" class="btn exclude">Exclude <kbd>X</kbd></button>
        <button id="btn-skip" class="btn">Skip <kbd>S</kbd></button>
      </div>
      ${state.error ? `<p class="error">${escapeHtml(state.error)}</p>` : ""}
    </div>`;
    document.getElementById("btn-include")?.addEventListener("click", () => void queue.decide("include"));
    document.getElementById("btn-exclude")?.addEventListener("click", () => void queue.decide("exclude"));
    document.getElementById("btn-skip")?.addEventListener("click", () => queue.skip());
}
function wireQueueButtons() {
    document.getElementById("btn-load")?.addEventListener("click", () => void loadQueue());
    document.getElementById("btn-close")?.addEventListener("click", () => void closeStage());
}
async function closeStage() {
    try {
        const result = await client.closeStage(currentStage);
        closeSummary =
            `${stageLabel(result.stage)} closed: ${result.advanced.length} advanced, ` +
                `${result.rejected.length} rejected, ${result.conflicts.length} conflicts`;
        setStatus(closeSummary);
        renderQueue();
    }
    catch (error) {
        setStatus(describeError(error), true);
    }
}
// --- conflicts view --------------------------------------------------------
async function renderConflicts() {
    const view = document.getElementById("view");
    if (!view)
        return;
    let conflicts;
    try {
        conflicts = (await client.conflicts()).conflicts;
    }
    catch (error) {
        setStatus(describeError(error), true);
        return;
    }
    if (conflicts.length === 0) {
        view.innerHTML = '<div class="card empty"><p>No open conflicts.</p></div>';
        return;
    }
    view.innerHTML = conflicts
        .map((conflict) => {
        const votes = Object.entries(conflict.verdicts)
            .map(([name, verdict]) => `<span class="badge ${verdict}">${escapeHtml(name)}: ${verdict}</span>`)
            .join("");
        return `
        <div class="card" data-article="${conflict.article_id}" data-stage="${conflict.stage}">
          <h3>${conflict.article_id}</h3>
          <p class="byline">${stageLabel(conflict.stage)} stage</p>
          <div class="meta">${votes}</div>
          <div class="actions">
            <button class="btn include" data-verdict="include">Consensus include</button>
            <button class="btn exclude" data-verdict="exclude">Consensus exclude</button>
          </div>
        </div>`;
    })
        .join("");
    view.querySelectorAll("button[data-verdict]").forEach((button) => {
        button.addEventListener("click", () => {
            const card = button.closest(".card");
            void settleConflict(card.dataset.article, card.dataset.stage, button.dataset.verdict);
        });
    });
}
async function settleConflict(articleId, stage, verdict) {
    if (!rater()) {
        setStatus("enter a rater name before settling a conflict", true);
        return;
    }
    try {
        await client.consensus(articleId, stage, verdict, rater());
        setStatus(`consensus ${verdict} recorded for ${articleId}`);
        await renderConflicts();
    }
    catch (error) {
        setStatus(describeError(error), true);
    }
}
// --- duplicates view -------------------------------------------------------
async function renderDuplicates() {
    const view = document.getElementById("view");
    if (!view)
        return;
    let pairs;
    try {
        pairs = (await client.duplicates()).pairs;
    }
    catch (error) {
        setStatus(describeError(error), true);
        return;
    }
    if (pairs.length === 0) {
        view.innerHTML = '<div class="card empty"><p>No near-duplicates above the threshold.</p></div>';
        return;
    }
    view.innerHTML = pairs
        .map((pair) => `
      <div class="card" data-a="${pair.article_a}" data-b="${pair.article_b}">
        <p class="byline">similarity ${similarityLabel(pair.similarity)}</p>
        <p>${escapeHtml(pair.title_a)}</p>
        <p>${escapeHtml(pair.title_b)}</p>
        <div class="actions">
          <button class="btn warn" data-resolution="same">Same work</button>
          <button class="btn" data-resolution="different">Different</button>
        </div>
      </div>`)
        .join("");
    view.querySelectorAll("button[data-resolution]").forEach((button) => {
        button.addEventListener("click", () => {
            const card = button.closest(".card");
            void settleDuplicate(card.dataset.a, card.dataset.b, button.dataset.resolution);
        });
    });
}
async function settleDuplicate(a, b, resolution) {
    try {
        const result = await client.resolveDuplicate(a, b, resolution, rater() || "ui");
        setStatus(result.demoted ? `${result.demoted} folded away` : `recorded as ${resolution}`);
        await renderDuplicates();
    }
    catch (error) {
        setStatus(describeError(error), true);
    }
}
// --- venues view -----------------------------------------------------------
async function renderVenues() {
    const view = document.getElementById("view");
    if (!view)
        return;
    let pending;
    try {
        pending = (await client.venuesPending()).pending;
    }
    catch (error) {
        setStatus(describeError(error), true);
        return;
    }
    const options = RANKS.map((rank) => `<option value="${rank}">${rank}</option>`).join("");
    view.innerHTML = `
    <div class="card">
      <h3>Assign a rank</h3>
      <div class="form-row">
        <input id="venue-name" class="input" placeholder="venue name">
        <select id="venue-rank" class="input">${options}</select>
        <button id="venue-apply" class="btn include">Record</button>
        <button id="venue-suggest" class="btn">Suggest</button>
      </div>
      <div id="suggestions"></div>
    </div>
    <div class="card">
      <h3>Awaiting a rank (${pending.length})</h3>
      ${pending.length ? `<ul class="pending">${pending.map((v) => `<li>${escapeHtml(v)}</li>`).join("")}</ul>` : "<p>none</p>"}
    </div>`;
    view.querySelectorAll(".pending li").forEach((li) => {
        li.addEventListener("click", () => {
            document.getElementById("venue-name").value = li.textContent ?? "";
            void suggestVenues();
        });
    });
    document.getElementById("venue-apply")?.addEventListener("click", () => void applyRank());
    document.getElementById("venue-suggest")?.addEventListener("click", () => void suggestVenues());
}
async function suggestVenues() {
    const name = document.getElementById("venue-name").value.trim();
    const target = document.getElementById("suggestions");
    if (!name || !target)
        return;
    try {
        const { suggestions } = await client.venuesSuggest(name);
        target.innerHTML = suggestions.length
            ? suggestions
                .map((s) => `<p class="byline">${s.score.toFixed(3)}  ${escapeHtml(s.entry.venue_name)} ` +
                `[${s.entry.rank}] via ${s.entry.source}</p>`)
                .join("")
            : "<p class='byline'>no close matches</p>";
    }
    catch (error) {
        setStatus(describeError(error), true);
    }
}
async function applyRank() {
    const name = document.getElementById("venue-name").value.trim();
    const rank = document.getElementById("venue-rank").value;
    if (!name) {
        setStatus("enter a venue name first", true);
        return;
    }
    try {
        const entry = await client.rankVenue(name, rank, rater() || "ui");
        setStatus(`ranked ${entry.venue_name} as ${entry.rank}`);
        await renderVenues();
    }
    catch (error) {
        setStatus(describeError(error), true);
    }
}
// --- dashboard view --------------------------------------------------------
async function renderDashboard() {
    const view = document.getElementById("view");
    if (!view)
        return;
    try {
        const { rows } = await client.report();
        const header = ["iteration", "retrieved", "rejected (metadata)", "rejected (screening)", "approved", "efficiency"];
        const body = rows
            .map((row) => `<tr>${reportCells(row).map((cell) => `<td>${cell}</td>`).join("")}</tr>`)
            .join("");
        view.innerHTML = `
      <div class="card">
        <h3>Per-iteration efficiency</h3>
        ${rows.length
            ? `<table><thead><tr>${header.map((h) => `<th>${h}</th>`).join("")}</tr></thead><tbody>${body}</tbody></table>`
            : "<p>no iterations recorded</p>"}
        <div class="actions">
          <button id="btn-snowball" class="btn">Run next snowball iteration</button>
        </div>
        <p id="job-line" class="byline"></p>
      </div>`;
        document.getElementById("btn-snowball")?.addEventListener("click", () => void runSnowball());
    }
    catch (error) {
        setStatus(describeError(error), true);
    }
}
async function runSnowball() {
    const line = document.getElementById("job-line");
    try {
        let job = await client.startSnowball();
        while (job.status === "running") {
            if (line)
                line.textContent = `${job.id} running…`;
            await new Promise((resolve) => setTimeout(resolve, 500));
            job = await client.job(job.id);
        }
        if (job.status === "failed") {
            setStatus(`snowball failed: ${job.error}`, true);
        }
        else {
            const result = job.result ?? {};
            setStatus(`iteration ${result["iteration"]}: ${result["new_candidates"]} new candidates`);
            await renderDashboard();
        }
    }
    catch (error) {
        setStatus(describeError(error), true);
    }
}
// --- shell -----------------------------------------------------------------
function switchView(view) {
    currentView = view;
    document.querySelectorAll("nav button").forEach((button) => {
        button.classList.toggle("active", button.dataset.view === view);
    });
    const render = {
        queue: () => Promise.resolve(renderQueue()),
        conflicts: renderConflicts,
        duplicates: renderDuplicates,
        venues: renderVenues,
        dashboard: renderDashboard,
    }[view];
    void render();
}
function init() {
    const nav = document.getElementById("tabs");
    if (nav) {
        nav.innerHTML = VIEWS.map((view) => `<button data-view="${view}">${view}</button>`).join("");
        nav.querySelectorAll("button").forEach((button) => {
            button.addEventListener("click", () => switchView(button.dataset.view));
        });
    }
    const raterEl = document.getElementById("rater");
    if (raterEl) {
        raterEl.value = localStorage.getItem("refsift-rater") ?? "";
        raterEl.addEventListener("change", () => localStorage.setItem("refsift-rater", raterEl.value.trim()));
    }
    const stageEl = document.getElementById("stage");
    stageEl?.addEventListener("change", () => {
        currentStage = stageEl.value;
        queue.load([]);
        void loadQueue();
    });
    document.addEventListener("keydown", (event) => {
        if (currentView !== "queue" || event.metaKey || event.ctrlKey || event.altKey)
            return;
        const action = actionFor(event.key, event.target?.tagName);
        if (!action)
            return;
        event.preventDefault();
        switch (action) {
            case "include":
                void queue.decide("include");
                break;
            case "exclude":
                void queue.decide("exclude");
                break;
            case "skip":
                queue.skip();
                break;
            case "open-link": {
                const url = queue.current()?.url;
                if (url)
                    window.open(url, "_blank", "noopener");
                break;
            }
            case "close-stage":
                void closeStage();
                break;
            case "refresh":
                void loadQueue();
                break;
        }
    });
    switchView("queue");
}
init();
