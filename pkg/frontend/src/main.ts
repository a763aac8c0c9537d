import { InventoryApi } from './api.js';
import { InventoryApp } from './app.js';

declare global {
  interface Window {
    EWASTE_API_BASE?: string;
  }
}

function apiBase(): string {
  const fromQuery = new URLSearchParams(window.location.search).get('api');
  return window.EWASTE_API_BASE ?? fromQuery ?? 'http://127.0.0.1:8080';
}

const root = document.getElementById('app');
if (!root) {
  throw new Error('missing #app mount point');
}
const app = new InventoryApp(root, new InventoryApi(apiBase()));
app.start();
