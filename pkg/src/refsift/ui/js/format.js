export function authorLine(authors, year) {
    let names;
    if (authors.length === 0) {
        names = "unknown authors";
    }
    else if (authors.length <= 3) {
        names = authors.join(", ");
    }
    else {
        names = `${authors[0]} and ${authors.length - 1} others`;
    }
    return year === null ? names : `${names} (${year})`;
}
export function stageLabel(stage) {
    return stage === "fulltext" ? "full text" : stage;
}
export function similarityLabel(similarity) {
    return `${(similarity * 100).toFixed(1)}%`;
}
export function progressLabel(position, total) {
    if (total === 0)
        return "queue is empty";
    return `${position} of ${total}`;
}
export function truncate(text, max = 280) {
    if (text.length <= max)
        return text;
    return `${text.slice(0, max - 1).trimEnd()}…`;
}
/** Printable cells for one report row, in table column order. */
export function reportCells(row) {
    return [
        row.iteration,
        String(row.retrieved),
        String(row.rejected_metadata),
        String(row.rejected_screening),
        String(row.approved),
        row.efficiency,
    ];
}
