import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // the round-trip test drives a real server plus a full CLI session
    testTimeout: 240_000,
    hookTimeout: 120_000,
  },
});
