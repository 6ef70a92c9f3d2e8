export class ApiError extends Error {
    constructor(status, code, message) {
        super(message);
        this.status = status;
        this.code = code;
        this.name = "ApiError";
    }
}
function query(params) {
    const search = new URLSearchParams();
    for (const [key, value] of Object.entries(params)) {
        if (value !== undefined)
            search.set(key, String(value));
    }
    const encoded = search.toString();
    return encoded ? `?${encoded}` : "";
}
/** Typed client for the review service; all state lives server-side. */
export class ApiClient {
    constructor(options = {}) {
        this.base = options.base ?? "";
        this.token = options.token;
        this.fetchImpl = options.fetchImpl ?? ((input, init) => fetch(input, init));
        this.onResponse = options.onResponse;
    }
    async request(method, path, body) {
        const headers = {};
        if (body !== undefined)
            headers["content-type"] = "application/json";
        if (this.token)
            headers["authorization"] = `Bearer ${this.token}`;
        const response = await this.fetchImpl(this.base + path, {
            method,
            headers,
            body: body === undefined ? undefined : JSON.stringify(body),
        });
        const text = await response.text();
        let parsed = null;
        if (text) {
            try {
                parsed = JSON.parse(text);
            }
            catch {
                parsed = text;
            }
        }
        if (!response.ok) {
            const payload = (parsed ?? {});
            const detail = typeof payload.detail === "string" ? payload.detail : undefined;
            throw new ApiError(response.status, payload.code ?? "http", payload.message ?? detail ?? `request failed with status ${response.status}`);
        }
        this.onResponse?.(path, parsed);
        return parsed;
    }
    // --- reads ---------------------------------------------------------------
    articles(state) {
        return this.request("GET", `/articles${query({ state })}`);
    }
    queue(rater, stage) {
        return this.request("GET", `/queue${query({ rater, stage })}`);
    }
    conflicts(stage) {
        return this.request("GET", `/conflicts${query({ stage })}`);
    }
    venuesPending() {
        return this.request("GET", "/venues/pending");
    }
    venuesSuggest(q, k) {
        return this.request("GET", `/venues/suggest${query({ q, k })}`);
    }
    duplicates(threshold) {
        return this.request("GET", `/duplicates${query({ threshold })}`);
    }
    report() {
        return this.request("GET", "/report");
    }
    job(id) {
        return this.request("GET", `/jobs/${id}`);
    }
    // --- mutations -----------------------------------------------------------
    decide(rater, articleId, stage, verdict) {
        return this.request("POST", "/decisions", {
            rater,
            article_id: articleId,
            stage,
            verdict,
        });
    }
    closeStage(stage) {
        return this.request("POST", `/decisions/close${query({ stage })}`);
    }
    consensus(articleId, stage, verdict, by) {
        return this.request("POST", "/consensus", {
            article_id: articleId,
            stage,
            verdict,
            by,
        });
    }
    rankVenue(venue, rank, by, force = false) {
        return this.request("POST", "/venues/rank", {
            venue,
            rank,
            source: "manual",
            by,
            force,
        });
    }
    resolveDuplicate(articleA, articleB, resolution, by) {
        return this.request("POST", "/duplicates/resolve", {
            article_a: articleA,
            article_b: articleB,
            resolution,
            by,
        });
    }
    startSnowball(direction) {
        return this.request("POST", "/jobs/snowball", direction ? { direction } : {});
    }
}
