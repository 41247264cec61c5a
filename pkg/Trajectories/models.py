from django.db import models

# One row per `manage.py bohm` invocation.

class runlog(models.Model):
    runlognr = models.AutoField(primary_key=True)
    task = models.TextField()
    preset = models.TextField(blank=True, default='')
    config_hash = models.TextField(blank=True, default='')
    status = models.TextField()
    exit_code = models.IntegerField(default=0)
    out_dir = models.TextField(blank=True, default='')
    message = models.TextField(blank=True, default='')
    started_at = models.DateTimeField()
    finished_at = models.DateTimeField()
    duration = models.FloatField()
