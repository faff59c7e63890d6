// Minimal built-in overlay: highlights markers from the embedded report
// and shows a count badge. A richer overlay can replace this file via
// the proxy's ui_dir setting.
(function () {
  "use strict";
  var el = document.getElementById("manners-report");
  if (!el) { return; }
  var report;
  try { report = JSON.parse(el.textContent); } catch (e) {
    console.warn("manners: embedded report is not valid JSON", e);
    return;
  }
  if (!report || !Array.isArray(report.annotations)) {
    console.warn("manners: embedded report has no annotations list");
    return;
  }
  var byId = {};
  report.annotations.forEach(function (a) { byId[a.id] = a; });
  var dismissed = {};
  var badge = document.createElement("div");
  badge.id = "manners-badge";
  badge.setAttribute("data-manners-overlay", "");
  document.body.appendChild(badge);

  function refresh() {
    var n = report.annotations.filter(function (a) { return !dismissed[a.id]; }).length;
    badge.textContent = String(n);
    badge.hidden = n === 0;
  }

  var markers = document.querySelectorAll("[data-manners-id]");
  Array.prototype.forEach.call(markers, function (m) {
    var a = byId[m.getAttribute("data-manners-id")];
    if (!a) {
      m.removeAttribute("data-manners-severity");
      console.warn("manners: marker without report entry", m.getAttribute("data-manners-id"));
      return;
    }
    m.title = a.message + (a.fix_hint ? "\n" + a.fix_hint : "");
    m.tabIndex = 0;
    m.addEventListener("dblclick", function () {
      dismissed[a.id] = true;
      var same = document.querySelectorAll('[data-manners-id="' + a.id + '"]');
      Array.prototype.forEach.call(same, function (s) { s.classList.add("manners-dismissed"); });
      refresh();
    });
  });
  refresh();
})();
