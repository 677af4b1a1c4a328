import { defineConfig } from 'vitest/config'

export default defineConfig({
  test: {
    // the pipeline tests encode full-size grids and shell out to the
    // downstream validator, which needs more than the default 5 s
    testTimeout: 60_000,
  },
})
