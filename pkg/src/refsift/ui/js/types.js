// Response shapes of the review service. Field names mirror the JSON
// payloads exactly so responses can be used without remapping.
export {};
