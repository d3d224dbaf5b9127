/** Console entry point: wire the store to the DOM. */

import { BrokerApi } from "./api.js";
import { renderAuditTable, renderBanner, renderPendingList } from "./render.js";
import { ConsoleStore } from "./store.js";

const POLL_INTERVAL_MS = 2000;

function required(id: string): HTMLElement {
  const element = document.getElementById(id);
  if (!element) throw new Error(`missing #${id}`);
  return element;
}

export function startConsole(): void {
  const params = new URLSearchParams(window.location.search);
  const baseUrl = params.get("broker") ?? "";
  const adminToken = sessionStorage.getItem("credbroker-admin-token") ?? "";
  const api = new BrokerApi(baseUrl, adminToken);
  const store = new ConsoleStore(api);

  const banner = required("banner");
  const pendingRoot = required("pending");
  const auditRoot = required("audit");
  const approverInput = required("approver") as HTMLInputElement;
  const tokenInput = required("admin-token") as HTMLInputElement;
  const filterKind = required("filter-kind") as HTMLSelectElement;
  const filterRequest = required("filter-request") as HTMLInputElement;

  store.onChange((state) => {
    banner.innerHTML = renderBanner(state);
    pendingRoot.innerHTML = renderPendingList(state);
    auditRoot.innerHTML = renderAuditTable(state);
  });

  // Approver identity is entered once per session and sent with every verdict.
  approverInput.value = sessionStorage.getItem("credbroker-approver") ?? "";
  store.setApprover(approverInput.value);
  approverInput.addEventListener("change", () => {
    sessionStorage.setItem("credbroker-approver", approverInput.value);
    store.setApprover(approverInput.value);
  });
  tokenInput.addEventListener("change", () => {
    sessionStorage.setItem("credbroker-admin-token", tokenInput.value);
    window.location.reload();
  });

  pendingRoot.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const requestId = target.dataset["requestId"];
    if (!requestId) return;
    const verdict = target.classList.contains("approve") ? "approve" : "deny";
    void store.resolve(requestId, verdict).then(() => store.refreshAudit());
  });

  const applyFilter = () => {
    store.setAuditFilter({
      kind: filterKind.value || undefined,
      request_id: filterRequest.value || undefined,
    });
    void store.refreshAudit();
  };
  filterKind.addEventListener("change", applyFilter);
  filterRequest.addEventListener("change", applyFilter);

  store.startPolling(POLL_INTERVAL_MS);
  void store.refreshPending();
  void store.refreshAudit();
}

startConsole();
