import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // The e2e file talks to a live engine process; measured round trips on a
    // small box are only meaningful without sibling workers competing.
    fileParallelism: false,
    testTimeout: 20000,
    hookTimeout: 240000,
  },
});
