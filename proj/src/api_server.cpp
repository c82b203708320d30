#include <httplib.h>

#include <cctype>

#include "cmda/api_service.hpp"

namespace cmda::api {

void bind(httplib::Server& server, Router& router) {
  auto handler = [&router](const httplib::Request& req, httplib::Response& res) {
    Request r;
    r.method = req.method;
    r.path = req.path;
    r.body = req.body;
    for (const auto& [k, v] : req.params) r.query.emplace(k, v);
    for (const auto& [k, v] : req.headers) {
      std::string key = k;
      for (auto& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      r.headers.emplace(key, v);
    }
    auto out = router.handle(r);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  server.Get(R"(/.*)", handler);
  server.Post(R"(/.*)", handler);
  server.Patch(R"(/.*)", handler);
  server.Delete(R"(/.*)", handler);
  server.Put(R"(/.*)", handler);
}

}  // namespace cmda::api
