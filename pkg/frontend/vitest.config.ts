import { defineConfig } from "vitest/config";

export default defineConfig({
  // Source files import with explicit .js extensions (NodeNext emit for the
  // browser); map them back to the .ts files for the test runner.
  resolve: {
    alias: [{ find: /^(\.{1,2}\/.*)\.js$/, replacement: "$1" }],
  },
  test: {
    environment: "jsdom",
    include: ["test/**/*.test.ts"],
  },
});
